//! Checks against values computed independently of the library code paths:
//! closed forms written out here, nalgebra's eigensolver and direct finite
//! differences.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use fdyson::gaussian_paths::{
    CholeskySampler, CovarianceModel, FbmCirculantSampler, GridSpec, HurstParam, SeedSpec,
};
use fdyson::matrix_ensemble::{
    eigen_density_log, DensityMode, DensityQuery, Ensemble, HermitianFbmSampler,
    SymmetricFbmSampler,
};
use fdyson::spectral::{
    eigen_derivatives, eigh_jacobi, eigh_jacobi_hermitian, hoffman_wielandt_gap,
};
use fdyson::statistics::{
    abs_moment_std_normal, ks_critical_value, ks_two_sample, mean, standard_error,
};

fn cov(t: f64, s: f64, h: f64) -> f64 {
    0.5 * (t.powf(2.0 * h) + s.powf(2.0 * h) - (t - s).abs().powf(2.0 * h))
}

fn hurst(h: f64) -> HurstParam {
    HurstParam::new(h).unwrap()
}

fn random_symmetric(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&a + a.transpose()) * 0.5
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

/// Empirical covariance of sampled paths against the closed form, entry by
/// entry, in units of the Gaussian standard error of a product moment.
fn max_cov_z(paths: &[Vec<f64>], grid: &GridSpec, h: f64) -> f64 {
    let m = paths.len() as f64;
    let n = grid.steps();
    let mut worst: f64 = 0.0;
    for a in 1..=n {
        for b in a..=n {
            let (t, s) = (grid.node(a), grid.node(b));
            let est = paths.iter().map(|p| p[a] * p[b]).sum::<f64>() / m;
            let c = cov(t, s, h);
            let se = ((cov(t, t, h) * cov(s, s, h) + c * c) / m).sqrt();
            worst = worst.max((est - c).abs() / se);
        }
    }
    worst
}

#[test]
fn circulant_paths_have_fbm_covariance() {
    for h in [0.5, 0.6, 0.75, 0.9] {
        let grid = GridSpec::new(2.0, 8).unwrap();
        let sampler = FbmCirculantSampler::new(grid, hurst(h)).unwrap();
        let paths: Vec<Vec<f64>> = (0..20_000)
            .map(|r| sampler.sample(SeedSpec::new(11).replicate(r)).into_values())
            .collect();
        assert!(paths.iter().all(|p| p[0] == 0.0));
        let z = max_cov_z(&paths, &grid, h);
        assert!(z < 4.5, "H={h}: covariance deviates by {z} standard errors");
    }
}

#[test]
fn cholesky_paths_have_fbm_covariance() {
    let h = 0.7;
    let grid = GridSpec::new(1.0, 6).unwrap();
    let sampler = CholeskySampler::new(&CovarianceModel::Fbm(hurst(h)), grid).unwrap();
    let paths: Vec<Vec<f64>> = (0..20_000)
        .map(|r| sampler.sample(SeedSpec::new(5).replicate(r)).into_values())
        .collect();
    let z = max_cov_z(&paths, &grid, h);
    assert!(z < 4.5, "covariance deviates by {z} standard errors");
}

#[test]
fn cholesky_handles_degenerate_custom_covariance() {
    // Rank one: X_t = t Z.
    let model = CovarianceModel::custom(|t, s| t * s, 0.75).unwrap();
    let grid = GridSpec::new(1.0, 5).unwrap();
    let sampler = CholeskySampler::new(&model, grid).unwrap();
    assert_eq!(sampler.rank(), 1);
    let p = sampler.sample(SeedSpec::new(3));
    let z = p.last();
    for (k, v) in p.values().iter().enumerate() {
        assert_relative_eq!(*v, grid.node(k) * z, epsilon = 1e-12);
    }
}

#[test]
fn symmetric_matrix_entries_have_expected_variance() {
    let h = 0.75;
    let grid = GridSpec::new(1.0, 4).unwrap();
    let sampler = SymmetricFbmSampler::new(grid, hurst(h), DMatrix::zeros(3, 3)).unwrap();
    let finals: Vec<DMatrix<f64>> = (0..20_000)
        .map(|r| sampler.sample(9, r).matrix(4).clone())
        .collect();
    for k in 0..3 {
        for l in 0..3 {
            let xs: Vec<f64> = finals.iter().map(|m| m[(k, l)] * m[(k, l)]).collect();
            let want = if k == l { 2.0 } else { 1.0 };
            assert!(finals.iter().all(|m| m[(k, l)] == m[(l, k)]));
            let z = (mean(&xs) - want) / standard_error(&xs);
            assert!(z.abs() < 4.5, "entry ({k},{l}): z = {z}");
        }
    }
}

#[test]
fn two_by_two_gap_follows_rayleigh_and_chi3() {
    // Symmetric: gap = sqrt((a-c)^2 + 4b^2) with a-c ~ N(0, 4 s^2H), 2b ~ N(0, 4 s^2H).
    let (h, s) = (0.75, 0.5);
    let grid = GridSpec::new(s, 2).unwrap();
    let m = 20_000;
    let sym = SymmetricFbmSampler::new(grid, hurst(h), DMatrix::zeros(2, 2)).unwrap();
    let gaps: Vec<f64> = (0..m)
        .map(|r| {
            let x = sym.sample(1, r).matrix(2).clone();
            ((x[(0, 0)] - x[(1, 1)]).powi(2) + 4.0 * x[(0, 1)].powi(2)).sqrt()
        })
        .collect();
    let sigma = 2.0 * s.powf(h);
    let z = (mean(&gaps) - sigma * (std::f64::consts::PI / 2.0).sqrt()) / standard_error(&gaps);
    assert!(z.abs() < 4.5, "Rayleigh mean z = {z}");
    let sq: Vec<f64> = gaps.iter().map(|g| g * g).collect();
    let z = (mean(&sq) - 2.0 * sigma * sigma) / standard_error(&sq);
    assert!(z.abs() < 4.5, "Rayleigh second moment z = {z}");

    // Hermitian: gap^2 / (2 s^2H) is chi-square with three degrees of freedom.
    let herm = HermitianFbmSampler::new(grid, hurst(h), DMatrix::zeros(2, 2)).unwrap();
    let sq: Vec<f64> = (0..m)
        .map(|r| {
            let x = herm.sample(2, r).matrix(2).clone();
            (x[(0, 0)].re - x[(1, 1)].re).powi(2) + 4.0 * x[(0, 1)].norm_sqr()
        })
        .collect();
    let want = 3.0 * 2.0 * s.powf(2.0 * h);
    let z = (mean(&sq) - want) / standard_error(&sq);
    assert!(z.abs() < 4.5, "chi-3 second moment z = {z}");
}

#[test]
fn jacobi_agrees_with_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in 2..=8 {
        for _ in 0..50 {
            let a = random_symmetric(&mut rng, d);
            let ours = eigh_jacobi(&a).unwrap();
            let theirs = sorted_desc(
                SymmetricEigen::new(a.clone())
                    .eigenvalues
                    .iter()
                    .copied()
                    .collect(),
            );
            for (x, y) in ours.eigenvalues.iter().zip(&theirs) {
                assert_relative_eq!(x, y, epsilon = 1e-10);
            }
            assert!((ours.reconstruct() - &a).norm() < 1e-11);
        }
    }
}

#[test]
fn hermitian_jacobi_agrees_with_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for d in 2..=6 {
        for _ in 0..30 {
            let a = DMatrix::from_fn(d, d, |_, _| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            let a = (&a + a.adjoint()).map(|z| z * 0.5);
            let ours = eigh_jacobi_hermitian(&a).unwrap();
            let theirs = sorted_desc(
                SymmetricEigen::new(a.clone())
                    .eigenvalues
                    .iter()
                    .copied()
                    .collect(),
            );
            for (x, y) in ours.eigenvalues.iter().zip(&theirs) {
                assert_relative_eq!(x, y, epsilon = 1e-10);
            }
            assert!((ours.reconstruct() - &a).norm() < 1e-11);
        }
    }
}

/// Perturbs the scalar coordinate `b_kh` of the symmetric-matrix
/// parametrisation: `x_kk = sqrt(2) b_kk`, `x_kh = x_hk = b_kh`.
fn perturb(a: &DMatrix<f64>, k: usize, h: usize, e: f64) -> DMatrix<f64> {
    let mut b = a.clone();
    if k == h {
        b[(k, k)] += std::f64::consts::SQRT_2 * e;
    } else {
        b[(k, h)] += e;
        b[(h, k)] += e;
    }
    b
}

fn nalgebra_eigs(a: &DMatrix<f64>) -> Vec<f64> {
    sorted_desc(
        SymmetricEigen::new(a.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect(),
    )
}

#[test]
fn derivatives_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for d in 2..=5 {
        let a = random_symmetric(&mut rng, d);
        let dec = eigh_jacobi(&a).unwrap();
        assert!(
            dec.min_gap() > 0.05,
            "redraw seed for a well separated spectrum"
        );
        let der = eigen_derivatives(&dec).unwrap();
        for k in 0..d {
            for h in k..d {
                let e = 1e-4;
                let (lp, lm, l0) = (
                    nalgebra_eigs(&perturb(&a, k, h, e)),
                    nalgebra_eigs(&perturb(&a, k, h, -e)),
                    nalgebra_eigs(&a),
                );
                for i in 0..d {
                    let g = (lp[i] - lm[i]) / (2.0 * e);
                    let hs = (lp[i] - 2.0 * l0[i] + lm[i]) / (e * e);
                    assert_relative_eq!(der.grad(i, k, h), g, epsilon = 1e-6);
                    assert_relative_eq!(der.hess(i, k, h), hs, epsilon = 5e-3);
                }
            }
        }
        for i in 0..d {
            let sum_sq: f64 = der.gradient[i].iter().map(|g| g * g).sum();
            assert_relative_eq!(sum_sq, 2.0, epsilon = 1e-10);
            let lam = &dec.eigenvalues;
            let want: f64 = (0..d)
                .filter(|&j| j != i)
                .map(|j| 2.0 / (lam[i] - lam[j]))
                .sum();
            assert_relative_eq!(
                der.hessian_trace(i),
                want,
                epsilon = 1e-9,
                max_relative = 1e-9
            );
        }
    }
}

#[test]
fn hoffman_wielandt_holds_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..10_000 {
        let d = 2 + i % 5;
        let a = random_symmetric(&mut rng, d);
        let b = random_symmetric(&mut rng, d) * (0.1 + (i % 3) as f64);
        let (lhs, rhs) = hoffman_wielandt_gap(&a, &b).unwrap();
        assert!(
            lhs <= rhs * (1.0 + 1e-12) + 1e-14,
            "pair {i}: {lhs} > {rhs}"
        );
    }
}

#[test]
fn absolute_normal_moment_closed_form_and_monte_carlo() {
    assert_relative_eq!(
        abs_moment_std_normal(1.0),
        (2.0 / std::f64::consts::PI).sqrt(),
        epsilon = 1e-12
    );
    assert_relative_eq!(abs_moment_std_normal(2.0), 1.0, epsilon = 1e-12);
    assert_relative_eq!(abs_moment_std_normal(4.0), 3.0, epsilon = 1e-11);
    let p = 4.0 / 3.0;
    assert_relative_eq!(abs_moment_std_normal(p), 0.830_8, epsilon = 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs: Vec<f64> = (0..200_000)
        .map(|_| rng.sample::<f64, _>(StandardNormal).abs().powf(p))
        .collect();
    let z = (mean(&xs) - abs_moment_std_normal(p)) / standard_error(&xs);
    assert!(z.abs() < 4.5, "z = {z}");
}

#[test]
fn two_sample_ks_is_calibrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (m, n, reps) = (400, 300, 200);
    let crit = ks_critical_value(m, n);
    let rejections = (0..reps)
        .filter(|_| {
            let a: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            ks_two_sample(&a, &b).unwrap() > crit
        })
        .count();
    assert!(
        rejections as f64 <= 0.03 * reps as f64,
        "{rejections} of {reps} rejected"
    );

    let a: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let b: Vec<f64> = (0..n)
        .map(|_| 0.5 + rng.sample::<f64, _>(StandardNormal))
        .collect();
    assert!(ks_two_sample(&a, &b).unwrap() > crit);
}

#[test]
fn orthogonal_density_matches_gaussian_orthogonal_ensemble() {
    // GOE with off-diagonal variance σ² and diagonal 2σ² has joint density
    // ∝ |λ1-λ2| exp(-(λ1²+λ2²)/4σ²) in d = 2.
    let sigma = 0.7_f64;
    let q = |l: [f64; 2]| DensityQuery {
        eigenvalues: l.to_vec(),
        scale: sigma,
        ensemble: Ensemble::Orthogonal,
        mode: DensityMode::LogUnnormalized,
    };
    let pts = [[1.0, -0.5], [0.3, 0.2], [2.0, 1.0]];
    let logs: Vec<f64> = pts
        .iter()
        .map(|&l| eigen_density_log(&q(l)).unwrap())
        .collect();
    let direct: Vec<f64> = pts
        .iter()
        .map(|l| (l[0] - l[1]).ln() - (l[0] * l[0] + l[1] * l[1]) / (4.0 * sigma * sigma))
        .collect();
    for w in 1..pts.len() {
        assert_relative_eq!(logs[w] - logs[0], direct[w] - direct[0], epsilon = 1e-12);
    }
    assert!(eigen_density_log(&q([0.1, 0.1])).is_err());
}
