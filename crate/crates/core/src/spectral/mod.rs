//! Eigendecompositions with a fixed sign convention, eigenvalue paths, and
//! closed-form first and second derivatives of the ordered eigenvalues with
//! respect to the scalar entry paths of a symmetric matrix.

mod jacobi;

use std::f64::consts::SQRT_2;
use std::io::Write;

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian_paths::{GridSpec, ScalarPath};
use crate::matrix_ensemble::{
    entry_count, entry_index, upper_entries, HermMatrixPath, SymMatrixPath,
};

const PIVOT_TOLERANCE: f64 = 1e-12;
const ENTRY_TOLERANCE: f64 = 1e-10;
const GAP_TOLERANCE: f64 = 1e-12;
const MINOR_CHECK_MAX_DIM: usize = 4;

/// Eigenvalues sorted descending with the matching eigenvector columns.
///
/// Column `i` of `frame` is the eigenvector of `eigenvalues[i]`, rescaled so
/// that `frame[(i, i)]` is real and positive. When that entry is below
/// `1e-12` in modulus the column is instead rotated so its largest component
/// is real and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition<T: ComplexField<RealField = f64>> {
    pub eigenvalues: Vec<f64>,
    pub frame: DMatrix<T>,
    /// Distinct eigenvalues, no vanishing frame entry and, for `d <= 4`, no
    /// vanishing minor of the frame.
    pub very_good: bool,
}

pub type SymEigen = EigenDecomposition<f64>;
pub type HermEigen = EigenDecomposition<Complex64>;

impl<T: ComplexField<RealField = f64>> EigenDecomposition<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U diag(λ) U^*`.
    pub fn reconstruct(&self) -> DMatrix<T> {
        let d = self.dim();
        let lam = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                T::from_real(self.eigenvalues[i])
            } else {
                T::zero()
            }
        });
        &self.frame * lam * self.frame.adjoint()
    }

    /// Smallest adjacent gap `λ_i - λ_{i+1}`.
    pub fn min_gap(&self) -> f64 {
        self.eigenvalues
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::INFINITY, f64::min)
    }
}

fn eigh<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Result<EigenDecomposition<T>> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(Error::DimensionMismatch {
            left: d,
            right: m.ncols(),
        });
    }
    let (diag, v) = jacobi::jacobi_eigen(m)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| diag[b].total_cmp(&diag[a]));

    let eigenvalues: Vec<f64> = order.iter().map(|&j| diag[j]).collect();
    let mut frame = DMatrix::<T>::zeros(d, d);
    for (i, &j) in order.iter().enumerate() {
        frame.set_column(i, &v.column(j));
    }
    for i in 0..d {
        let pivot_row = if frame[(i, i)].clone().modulus() >= PIVOT_TOLERANCE {
            i
        } else {
            (0..d)
                .max_by(|&a, &b| {
                    frame[(a, i)]
                        .clone()
                        .modulus()
                        .total_cmp(&frame[(b, i)].clone().modulus())
                })
                .expect("d >= 1")
        };
        let pivot = frame[(pivot_row, i)].clone();
        let phase = pivot.clone().unscale(pivot.modulus()).conjugate();
        for k in 0..d {
            frame[(k, i)] = frame[(k, i)].clone() * phase.clone();
        }
    }
    let very_good = is_very_good(&eigenvalues, &frame);
    Ok(EigenDecomposition {
        eigenvalues,
        frame,
        very_good,
    })
}

fn is_very_good<T: ComplexField<RealField = f64>>(eigenvalues: &[f64], frame: &DMatrix<T>) -> bool {
    let d = eigenvalues.len();
    if eigenvalues.windows(2).any(|w| w[0] - w[1] <= GAP_TOLERANCE) {
        return false;
    }
    if frame.iter().any(|u| u.clone().modulus() <= ENTRY_TOLERANCE) {
        return false;
    }
    if d <= MINOR_CHECK_MAX_DIM {
        let full = (1usize << d) - 1;
        for rows in 1..full {
            let size = rows.count_ones() as usize;
            if size < 2 {
                continue;
            }
            for cols in 1..full {
                if cols.count_ones() as usize != size {
                    continue;
                }
                let r: Vec<usize> = (0..d).filter(|b| rows >> b & 1 == 1).collect();
                let c: Vec<usize> = (0..d).filter(|b| cols >> b & 1 == 1).collect();
                let minor = DMatrix::from_fn(size, size, |i, j| frame[(r[i], c[j])].clone());
                if minor.determinant().modulus() <= ENTRY_TOLERANCE {
                    return false;
                }
            }
        }
    }
    true
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn eigh_jacobi(m: &DMatrix<f64>) -> Result<SymEigen> {
    eigh(m)
}

/// Hermitian eigendecomposition by complex Jacobi rotations.
pub fn eigh_jacobi_hermitian(m: &DMatrix<Complex64>) -> Result<HermEigen> {
    eigh(m)
}

/// Ordered eigenvalue trajectories along a matrix path.
#[derive(Debug, Clone)]
pub struct EigenPath {
    grid: GridSpec,
    /// `lambdas[i][m] = λ_i(t_m)`.
    lambdas: Vec<Vec<f64>>,
    frames: Option<Vec<SymEigen>>,
}

impl EigenPath {
    /// Eigenpath from given trajectories, checked to be non-increasing in `i`
    /// at every node.
    pub fn from_trajectories(grid: GridSpec, lambdas: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(bad) = lambdas.iter().position(|l| l.len() != grid.steps() + 1) {
            return Err(Error::InvalidGrid(format!(
                "trajectory {bad} has {} values for {} steps",
                lambdas[bad].len(),
                grid.steps()
            )));
        }
        for m in 0..=grid.steps() {
            if lambdas.windows(2).any(|w| w[0][m] < w[1][m]) {
                return Err(Error::OrderingViolated { node: m });
            }
        }
        Ok(Self {
            grid,
            lambdas,
            frames: None,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambda(&self, i: usize) -> &[f64] {
        &self.lambdas[i]
    }

    pub fn trajectories(&self) -> &[Vec<f64>] {
        &self.lambdas
    }

    pub fn lambda_path(&self, i: usize) -> ScalarPath {
        ScalarPath::new(self.grid, self.lambdas[i].clone()).expect("finite eigenvalues")
    }

    pub fn at(&self, m: usize) -> Vec<f64> {
        self.lambdas.iter().map(|l| l[m]).collect()
    }

    pub fn frames(&self) -> Option<&[SymEigen]> {
        self.frames.as_deref()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,i,lambda")?;
        for (m, t) in self.grid.nodes().enumerate() {
            for (i, l) in self.lambdas.iter().enumerate() {
                writeln!(out, "{t:.16e},{},{:.16e}", i + 1, l[m])?;
            }
        }
        Ok(())
    }
}

type Trajectories<T> = (Vec<Vec<f64>>, Vec<EigenDecomposition<T>>);

fn collect_path<T: ComplexField<RealField = f64>>(
    grid: GridSpec,
    decs: Vec<Result<EigenDecomposition<T>>>,
) -> Result<Trajectories<T>> {
    let decs = decs
        .into_iter()
        .enumerate()
        .map(|(m, r)| {
            r.map_err(|e| match e {
                Error::NoConvergence {
                    sweeps,
                    off_diagonal,
                    ..
                } => Error::NoConvergence {
                    sweeps,
                    off_diagonal,
                    node: Some(m),
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let d = decs.first().map_or(0, |e| e.dim());
    let mut lambdas = vec![Vec::with_capacity(grid.steps() + 1); d];
    for dec in &decs {
        for (i, l) in dec.eigenvalues.iter().enumerate() {
            lambdas[i].push(*l);
        }
    }
    Ok((lambdas, decs))
}

/// Per-node decomposition of a symmetric matrix path; labels follow the
/// descending sort. Frames are kept when `retain_frames` is set.
pub fn eigen_path(path: &SymMatrixPath, retain_frames: bool) -> Result<EigenPath> {
    let decs: Vec<_> = path.matrices().par_iter().map(eigh_jacobi).collect();
    let (lambdas, decs) = collect_path(*path.grid(), decs)?;
    Ok(EigenPath {
        grid: *path.grid(),
        lambdas,
        frames: retain_frames.then_some(decs),
    })
}

/// Eigenvalue trajectories of a Hermitian matrix path (frames are not kept).
pub fn eigen_path_hermitian(path: &HermMatrixPath) -> Result<EigenPath> {
    let decs: Vec<_> = path
        .matrices()
        .par_iter()
        .map(eigh_jacobi_hermitian)
        .collect();
    let (lambdas, _) = collect_path(*path.grid(), decs)?;
    Ok(EigenPath {
        grid: *path.grid(),
        lambdas,
        frames: None,
    })
}

/// Derivatives of `λ_i = Φ_i(b)` with respect to the scalar entries `b_kh`,
/// `k <= h`, indexed by [`entry_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDerivatives {
    pub dim: usize,
    pub gradient: Vec<Vec<f64>>,
    pub hessian_diag: Vec<Vec<f64>>,
}

impl EigenDerivatives {
    pub fn grad(&self, i: usize, k: usize, h: usize) -> f64 {
        self.gradient[i][entry_index(self.dim, k, h)]
    }

    pub fn hess(&self, i: usize, k: usize, h: usize) -> f64 {
        self.hessian_diag[i][entry_index(self.dim, k, h)]
    }

    pub fn hessian_trace(&self, i: usize) -> f64 {
        self.hessian_diag[i].iter().sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,k,h,grad,hess")?;
        for i in 0..self.dim {
            for (k, h) in upper_entries(self.dim) {
                writeln!(
                    out,
                    "{},{},{},{:.16e},{:.16e}",
                    i + 1,
                    k + 1,
                    h + 1,
                    self.grad(i, k, h),
                    self.hess(i, k, h)
                )?;
            }
        }
        Ok(())
    }
}

/// Gradient and Hessian diagonal of each ordered eigenvalue.
///
/// With `u_i` the `i`-th eigenvector column:
/// `∂Φ_i/∂b_kh = 2 u_ki u_hi` for `k < h` and `√2 u_ki²` on the diagonal;
/// `∂²Φ_i/∂b_kh² = 2 Σ_{j≠i} (u_ki u_hj + u_hi u_kj)² / (λ_i - λ_j)` for
/// `k < h` and `4 Σ_{j≠i} (u_ki u_kj)² / (λ_i - λ_j)` on the diagonal.
///
/// The formulas need a simple spectrum only, so that is what is checked.
pub fn eigen_derivatives(dec: &SymEigen) -> Result<EigenDerivatives> {
    let d = dec.dim();
    let lam = &dec.eigenvalues;
    if let Some(i) = lam.windows(2).position(|w| w[0] - w[1] <= GAP_TOLERANCE) {
        return Err(Error::NotVeryGood {
            node: None,
            reason: format!("eigenvalues {} and {} coincide", i + 1, i + 2),
        });
    }
    let u = &dec.frame;
    let n = entry_count(d);
    let mut gradient = vec![vec![0.0; n]; d];
    let mut hessian_diag = vec![vec![0.0; n]; d];
    for i in 0..d {
        for (k, h) in upper_entries(d) {
            let e = entry_index(d, k, h);
            let (g, hs) = if k == h {
                let hs: f64 = (0..d)
                    .filter(|&j| j != i)
                    .map(|j| 4.0 * (u[(k, i)] * u[(k, j)]).powi(2) / (lam[i] - lam[j]))
                    .sum();
                (SQRT_2 * u[(k, i)] * u[(k, i)], hs)
            } else {
                let hs: f64 = (0..d)
                    .filter(|&j| j != i)
                    .map(|j| {
                        2.0 * (u[(k, i)] * u[(h, j)] + u[(h, i)] * u[(k, j)]).powi(2)
                            / (lam[i] - lam[j])
                    })
                    .sum();
                (2.0 * u[(k, i)] * u[(h, i)], hs)
            };
            gradient[i][e] = g;
            hessian_diag[i][e] = hs;
        }
    }
    Ok(EigenDerivatives {
        dim: d,
        gradient,
        hessian_diag,
    })
}

/// `(Σ_i (λ_i(A) - λ_i(B))², ‖A - B‖_F²)` with both spectra sorted descending.
pub fn hoffman_wielandt_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(f64, f64)> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            left: a.nrows(),
            right: b.nrows(),
        });
    }
    let la = eigh_jacobi(a)?.eigenvalues;
    let lb = eigh_jacobi(b)?.eigenvalues;
    let lhs = la.iter().zip(&lb).map(|(x, y)| (x - y).powi(2)).sum();
    let rhs = (a - b).norm_squared();
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn sym(d: usize, vals: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(d, d, vals)
    }

    #[test]
    fn diagonal_input() {
        let dec = eigh_jacobi(&DMatrix::from_diagonal(&DVector::from_vec(vec![
            3.0, 1.0, 2.0,
        ])))
        .unwrap();
        assert_eq!(dec.eigenvalues, vec![3.0, 2.0, 1.0]);
        let expected = sym(3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(dec.frame, expected);
        assert!(!dec.very_good);
    }

    #[test]
    fn two_by_two_closed_form() {
        let dec = eigh_jacobi(&sym(2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_relative_eq!(dec.eigenvalues[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(dec.eigenvalues[1], -1.0, epsilon = 1e-15);
        let r = 0.5f64.sqrt();
        assert_relative_eq!(dec.frame[(0, 0)], r, epsilon = 1e-15);
        assert_relative_eq!(dec.frame[(1, 0)], r, epsilon = 1e-15);
        assert_relative_eq!(dec.frame[(0, 1)], -r, epsilon = 1e-15);
        assert_relative_eq!(dec.frame[(1, 1)], r, epsilon = 1e-15);
        assert!(dec.very_good);
    }

    #[test]
    fn zero_matrix() {
        let dec = eigh_jacobi(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(dec.eigenvalues, vec![0.0; 3]);
        assert!(!dec.very_good);
    }

    #[test]
    fn hermitian_two_by_two() {
        // [[1, i], [-i, 1]] has eigenvalues 2 and 0
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let m = DMatrix::from_row_slice(2, 2, &[one, i, -i, one]);
        let dec = eigh_jacobi_hermitian(&m).unwrap();
        assert_relative_eq!(dec.eigenvalues[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(dec.eigenvalues[1], 0.0, epsilon = 1e-14);
        assert!((dec.reconstruct() - m).norm() < 1e-14);
        for k in 0..2 {
            assert!(dec.frame[(k, k)].im.abs() < 1e-15 && dec.frame[(k, k)].re > 0.0);
        }
    }

    #[test]
    fn identity_frame_derivatives() {
        let dec = eigh_jacobi(&DMatrix::from_diagonal(&DVector::from_vec(vec![
            3.0, 2.0, 1.0,
        ])))
        .unwrap();
        let der = eigen_derivatives(&dec).unwrap();
        for i in 0..3 {
            for (k, h) in upper_entries(3) {
                let expected = if k == h && k == i { SQRT_2 } else { 0.0 };
                assert_eq!(der.grad(i, k, h), expected);
            }
            let norm: f64 = der.gradient[i].iter().map(|g| g * g).sum();
            assert_relative_eq!(norm, 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn swap_matrix_derivatives() {
        let dec = eigh_jacobi(&sym(2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let der = eigen_derivatives(&dec).unwrap();
        assert_relative_eq!(der.grad(0, 0, 0), SQRT_2 * 0.5, epsilon = 1e-15);
        assert_relative_eq!(der.grad(0, 1, 1), SQRT_2 * 0.5, epsilon = 1e-15);
        assert_relative_eq!(der.grad(0, 0, 1), 1.0, epsilon = 1e-15);
        let norm: f64 = der.gradient[0].iter().map(|g| g * g).sum();
        assert_relative_eq!(norm, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn degenerate_spectrum_is_rejected() {
        let dec = eigh_jacobi(&DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(
            eigen_derivatives(&dec),
            Err(Error::NotVeryGood { .. })
        ));
    }

    #[test]
    fn hoffman_wielandt_examples() {
        let a = sym(2, &[1.0, 0.5, 0.5, -2.0]);
        assert_eq!(hoffman_wielandt_gap(&a, &a).unwrap(), (0.0, 0.0));
        let (l, r) =
            hoffman_wielandt_gap(&sym(2, &[1.0, 0.0, 0.0, 0.0]), &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!((l, r), (1.0, 1.0));
        assert!(matches!(
            hoffman_wielandt_gap(&a, &DMatrix::zeros(3, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn trajectories_must_be_ordered() {
        let g = GridSpec::new(1.0, 1).unwrap();
        assert!(EigenPath::from_trajectories(g, vec![vec![1.0, 0.0], vec![0.0, 0.5]]).is_err());
        assert!(EigenPath::from_trajectories(g, vec![vec![1.0, 1.0], vec![0.0, 0.5]]).is_ok());
    }
}
