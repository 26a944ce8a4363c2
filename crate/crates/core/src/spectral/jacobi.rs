use nalgebra::{ComplexField, DMatrix};

use crate::error::{Error, Result};

pub(crate) const MAX_SWEEPS: usize = 100;
const RELATIVE_OFF_DIAGONAL: f64 = 1e-13;

fn off_diagonal_norm<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    let d = a.nrows();
    let mut s = 0.0;
    for k in 0..d {
        for h in 0..d {
            if k != h {
                s += a[(k, h)].clone().modulus_squared();
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi for a symmetric or Hermitian matrix.
///
/// Returns the (unsorted) real diagonal and the accumulated unitary `V` with
/// `A = V diag V^*`. Each pivot `(p, q)` is first made real by rescaling
/// column and row `q` by a unit phase, then annihilated by a real rotation.
pub(crate) fn jacobi_eigen<T>(m: &DMatrix<T>) -> Result<(Vec<f64>, DMatrix<T>)>
where
    T: ComplexField<RealField = f64>,
{
    let d = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<T>::identity(d, d);
    let target = RELATIVE_OFF_DIAGONAL * m.norm();

    let mut sweeps = 0;
    while off_diagonal_norm(&a) > target {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                off_diagonal: off_diagonal_norm(&a),
                node: None,
            });
        }
        for p in 0..d {
            for q in (p + 1)..d {
                rotate(&mut a, &mut v, p, q);
            }
        }
        sweeps += 1;
    }
    let diag = (0..d).map(|i| a[(i, i)].clone().real()).collect();
    Ok((diag, v))
}

fn rotate<T>(a: &mut DMatrix<T>, v: &mut DMatrix<T>, p: usize, q: usize)
where
    T: ComplexField<RealField = f64>,
{
    let d = a.nrows();
    let apq = a[(p, q)].clone();
    let r = apq.clone().modulus();
    if r == 0.0 {
        return;
    }

    // A <- D^* A D with D = diag(.., conj(ω) at q, ..) makes a_pq = r.
    let omega = apq.unscale(r);
    let omega_c = omega.clone().conjugate();
    for k in 0..d {
        a[(k, q)] = a[(k, q)].clone() * omega_c.clone();
    }
    for k in 0..d {
        a[(q, k)] = a[(q, k)].clone() * omega.clone();
    }
    for k in 0..d {
        v[(k, q)] = v[(k, q)].clone() * omega_c.clone();
    }

    let app = a[(p, p)].clone().real();
    let aqq = a[(q, q)].clone().real();
    let theta = (aqq - app) / (2.0 * r);
    let t = if theta == 0.0 {
        1.0
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // A <- P^T A P with P = [[c, s], [-s, c]] on (p, q).
    for k in 0..d {
        let akp = a[(k, p)].clone();
        let akq = a[(k, q)].clone();
        a[(k, p)] = akp.clone().scale(c) - akq.clone().scale(s);
        a[(k, q)] = akp.scale(s) + akq.scale(c);
    }
    for k in 0..d {
        let apk = a[(p, k)].clone();
        let aqk = a[(q, k)].clone();
        a[(p, k)] = apk.clone().scale(c) - aqk.clone().scale(s);
        a[(q, k)] = apk.scale(s) + aqk.scale(c);
    }
    a[(p, q)] = T::zero();
    a[(q, p)] = T::zero();
    a[(p, p)] = T::from_real(app - t * r);
    a[(q, q)] = T::from_real(aqq + t * r);

    for k in 0..d {
        let vkp = v[(k, p)].clone();
        let vkq = v[(k, q)].clone();
        v[(k, p)] = vkp.clone().scale(c) - vkq.clone().scale(s);
        v[(k, q)] = vkp.scale(s) + vkq.scale(c);
    }
}
