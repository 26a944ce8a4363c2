//! Symmetric and Hermitian matrix-valued Gaussian paths built from
//! independent scalar entry paths, plus the unnormalized joint eigenvalue
//! densities of the Gaussian orthogonal and unitary ensembles.

use std::f64::consts::SQRT_2;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_paths::rng::family;
use crate::gaussian_paths::{
    FbmCirculantSampler, GridSpec, HurstParam, Part, ScalarPath, SeedSpec,
};

/// Position of entry `(k, h)`, `k <= h`, in row-major upper-triangular order.
pub fn entry_index(d: usize, k: usize, h: usize) -> usize {
    debug_assert!(k <= h && h < d);
    k * d - k * (k + 1) / 2 + h
}

/// All `(k, h)` with `k <= h < d` in [`entry_index`] order.
pub fn upper_entries(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |k| (k..d).map(move |h| (k, h)))
}

pub fn entry_count(d: usize) -> usize {
    d * (d + 1) / 2
}

fn check_grid(entries: &[ScalarPath]) -> Result<GridSpec> {
    let grid = *entries
        .first()
        .ok_or(Error::EntryCount {
            expected: 1,
            got: 0,
        })?
        .grid();
    if let Some(bad) = entries.iter().position(|p| *p.grid() != grid) {
        return Err(Error::GridMismatch { entry: bad });
    }
    Ok(grid)
}

/// `X(t_m) = X(0) + X̂(t_m)` with `X̂_kh = X̂_hk = b_kh` off the diagonal and
/// `X̂_kk = √2 b_kk`.
#[derive(Debug, Clone)]
pub struct SymMatrixPath {
    dim: usize,
    grid: GridSpec,
    entries: Vec<ScalarPath>,
    offset: DMatrix<f64>,
    matrices: Vec<DMatrix<f64>>,
}

impl SymMatrixPath {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn offset(&self) -> &DMatrix<f64> {
        &self.offset
    }

    /// Scalar path `b_kh` for `k <= h`.
    pub fn entry(&self, k: usize, h: usize) -> &ScalarPath {
        &self.entries[entry_index(self.dim, k, h)]
    }

    pub fn entries(&self) -> &[ScalarPath] {
        &self.entries
    }

    pub fn matrix(&self, m: usize) -> &DMatrix<f64> {
        &self.matrices[m]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    /// Same path observed on every `stride`-th node.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .map(|p| p.subsample(stride))
            .collect::<Result<Vec<_>>>()?;
        assemble_symmetric(entries, self.offset.clone())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,k,h,value")?;
        for (m, t) in self.grid.nodes().enumerate() {
            let x = &self.matrices[m];
            for (k, h) in upper_entries(self.dim) {
                writeln!(out, "{t:.16e},{},{},{:.16e}", k + 1, h + 1, x[(k, h)])?;
            }
        }
        Ok(())
    }
}

pub fn assemble_symmetric(entries: Vec<ScalarPath>, offset: DMatrix<f64>) -> Result<SymMatrixPath> {
    let d = offset.nrows();
    if offset.ncols() != d {
        return Err(Error::DimensionMismatch {
            left: d,
            right: offset.ncols(),
        });
    }
    if entries.len() != entry_count(d) {
        return Err(Error::EntryCount {
            expected: entry_count(d),
            got: entries.len(),
        });
    }
    for k in 0..d {
        for h in (k + 1)..d {
            if offset[(k, h)] != offset[(h, k)] {
                return Err(Error::NonSymmetricOffset { row: k, col: h });
            }
        }
    }
    let grid = check_grid(&entries)?;
    let matrices = (0..=grid.steps())
        .map(|m| {
            let mut x = offset.clone();
            for (k, h) in upper_entries(d) {
                let b = entries[entry_index(d, k, h)].values()[m];
                if k == h {
                    x[(k, k)] += SQRT_2 * b;
                } else {
                    x[(k, h)] += b;
                    x[(h, k)] += b;
                }
            }
            x
        })
        .collect();
    Ok(SymMatrixPath {
        dim: d,
        grid,
        entries,
        offset,
        matrices,
    })
}

/// Hermitian path with real diagonal `b_kk` and off-diagonal
/// `(Re b_kh + i Im b_kh) / √2`.
///
/// Entry paths are ordered like [`upper_entries`]: one path for a diagonal
/// entry, then the real and imaginary parts for an off-diagonal one.
#[derive(Debug, Clone)]
pub struct HermMatrixPath {
    dim: usize,
    grid: GridSpec,
    entries: Vec<ScalarPath>,
    offset: DMatrix<Complex64>,
    matrices: Vec<DMatrix<Complex64>>,
}

impl HermMatrixPath {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn offset(&self) -> &DMatrix<Complex64> {
        &self.offset
    }

    pub fn entries(&self) -> &[ScalarPath] {
        &self.entries
    }

    pub fn matrix(&self, m: usize) -> &DMatrix<Complex64> {
        &self.matrices[m]
    }

    pub fn matrices(&self) -> &[DMatrix<Complex64>] {
        &self.matrices
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,k,h,re,im")?;
        for (m, t) in self.grid.nodes().enumerate() {
            let x = &self.matrices[m];
            for (k, h) in upper_entries(self.dim) {
                let z = x[(k, h)];
                writeln!(
                    out,
                    "{t:.16e},{},{},{:.16e},{:.16e}",
                    k + 1,
                    h + 1,
                    z.re,
                    z.im
                )?;
            }
        }
        Ok(())
    }
}

pub fn assemble_hermitian(
    entries: Vec<ScalarPath>,
    offset: DMatrix<Complex64>,
) -> Result<HermMatrixPath> {
    let d = offset.nrows();
    if offset.ncols() != d {
        return Err(Error::DimensionMismatch {
            left: d,
            right: offset.ncols(),
        });
    }
    if entries.len() != d * d {
        return Err(Error::EntryCount {
            expected: d * d,
            got: entries.len(),
        });
    }
    for k in 0..d {
        if offset[(k, k)].im != 0.0 {
            return Err(Error::NonHermitianOffset { row: k, col: k });
        }
        for h in (k + 1)..d {
            if offset[(k, h)] != offset[(h, k)].conj() {
                return Err(Error::NonHermitianOffset { row: k, col: h });
            }
        }
    }
    let grid = check_grid(&entries)?;
    let matrices = (0..=grid.steps())
        .map(|m| {
            let mut x = offset.clone();
            let mut next = entries.iter().map(|p| p.values()[m]);
            for (k, h) in upper_entries(d) {
                if k == h {
                    x[(k, k)].re += next.next().expect("entry count checked");
                } else {
                    let re = next.next().expect("entry count checked");
                    let im = next.next().expect("entry count checked");
                    let z = Complex64::new(re, im) / SQRT_2;
                    x[(k, h)] += z;
                    x[(h, k)] += z.conj();
                }
            }
            x
        })
        .collect();
    Ok(HermMatrixPath {
        dim: d,
        grid,
        entries,
        offset,
        matrices,
    })
}

/// Samples symmetric matrix fBm with a fixed offset. Entry `(k, h)` of
/// replicate `r` draws from stream `(master_seed, r, (k, h), Real)`.
#[derive(Debug, Clone)]
pub struct SymmetricFbmSampler {
    base: FbmCirculantSampler,
    offset: DMatrix<f64>,
    family: u16,
}

impl SymmetricFbmSampler {
    pub fn new(grid: GridSpec, hurst: HurstParam, offset: DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            base: FbmCirculantSampler::new(grid, hurst)?,
            offset,
            family: family::MATRIX,
        })
    }

    /// Uses a different stream family, giving an ensemble independent of the
    /// default one for the same replicate indices.
    pub fn with_family(mut self, family: u16) -> Self {
        self.family = family;
        self
    }

    pub fn dim(&self) -> usize {
        self.offset.nrows()
    }

    pub fn grid(&self) -> &GridSpec {
        self.base.grid()
    }

    pub fn hurst(&self) -> HurstParam {
        self.base.hurst()
    }

    pub fn offset(&self) -> &DMatrix<f64> {
        &self.offset
    }

    pub fn sample(&self, master_seed: u64, replicate: u64) -> SymMatrixPath {
        let seed = SeedSpec::new(master_seed)
            .replicate(replicate)
            .family(self.family);
        let entries = upper_entries(self.dim())
            .map(|(k, h)| self.base.sample(seed.entry(k, h)))
            .collect();
        assemble_symmetric(entries, self.offset.clone()).expect("offset validated at construction")
    }
}

#[derive(Debug, Clone)]
pub struct HermitianFbmSampler {
    base: FbmCirculantSampler,
    offset: DMatrix<Complex64>,
    family: u16,
}

impl HermitianFbmSampler {
    pub fn new(grid: GridSpec, hurst: HurstParam, offset: DMatrix<Complex64>) -> Result<Self> {
        Ok(Self {
            base: FbmCirculantSampler::new(grid, hurst)?,
            offset,
            family: family::MATRIX,
        })
    }

    pub fn with_family(mut self, family: u16) -> Self {
        self.family = family;
        self
    }

    pub fn dim(&self) -> usize {
        self.offset.nrows()
    }

    pub fn sample(&self, master_seed: u64, replicate: u64) -> HermMatrixPath {
        let seed = SeedSpec::new(master_seed)
            .replicate(replicate)
            .family(self.family);
        let entries = upper_entries(self.dim())
            .flat_map(|(k, h)| {
                let s = seed.entry(k, h);
                if k == h {
                    vec![self.base.sample(s)]
                } else {
                    vec![self.base.sample(s), self.base.sample(s.part(Part::Imag))]
                }
            })
            .collect();
        assemble_hermitian(entries, self.offset.clone()).expect("offset validated at construction")
    }
}

/// Samples replicates `0..count` in parallel, returned in replicate order.
pub fn sample_symmetric_ensemble(
    sampler: &SymmetricFbmSampler,
    master_seed: u64,
    count: usize,
) -> Vec<SymMatrixPath> {
    (0..count as u64)
        .into_par_iter()
        .map(|r| sampler.sample(master_seed, r))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    Orthogonal,
    Unitary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityMode {
    Unnormalized,
    LogUnnormalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityQuery {
    pub eigenvalues: Vec<f64>,
    pub scale: f64,
    pub ensemble: Ensemble,
    pub mode: DensityMode,
}

/// Log of the unnormalized joint eigenvalue density.
///
/// Orthogonal: `Σ_{k<h} log(λ_k-λ_h) - d(d+1)/2 log σ - Σ λ_i² / 4σ²`.
/// Unitary: `2 Σ_{k<h} log(λ_k-λ_h) - d² log σ - Σ λ_i² / 2σ²`.
/// For matrix fBm at time `t` pass `σ = t^H`.
pub fn eigen_density_log(q: &DensityQuery) -> Result<f64> {
    if !(q.scale > 0.0 && q.scale.is_finite()) {
        return Err(Error::InvalidScale(q.scale));
    }
    let lam = &q.eigenvalues;
    if let Some(i) = lam.windows(2).position(|w| w[0] <= w[1]) {
        return Err(Error::SimplexViolation { index: i });
    }
    let d = lam.len() as f64;
    let log_vandermonde: f64 = (0..lam.len())
        .flat_map(|k| ((k + 1)..lam.len()).map(move |h| (k, h)))
        .map(|(k, h)| (lam[k] - lam[h]).ln())
        .sum();
    let sum_sq: f64 = lam.iter().map(|x| x * x).sum();
    let s2 = q.scale * q.scale;
    Ok(match q.ensemble {
        Ensemble::Orthogonal => {
            log_vandermonde - 0.5 * d * (d + 1.0) * q.scale.ln() - sum_sq / (4.0 * s2)
        }
        Ensemble::Unitary => 2.0 * log_vandermonde - d * d * q.scale.ln() - sum_sq / (2.0 * s2),
    })
}

/// Density value in the representation requested by `q.mode`.
pub fn eigen_density(q: &DensityQuery) -> Result<f64> {
    let log = eigen_density_log(q)?;
    Ok(match q.mode {
        DensityMode::Unnormalized => log.exp(),
        DensityMode::LogUnnormalized => log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> GridSpec {
        GridSpec::new(1.0, 2).unwrap()
    }

    fn path(values: [f64; 3]) -> ScalarPath {
        ScalarPath::new(grid(), values.to_vec()).unwrap()
    }

    #[test]
    fn index_layout() {
        let d = 4;
        let idx: Vec<usize> = upper_entries(d)
            .map(|(k, h)| entry_index(d, k, h))
            .collect();
        assert_eq!(idx, (0..entry_count(d)).collect::<Vec<_>>());
    }

    #[test]
    fn diagonal_scaling() {
        let entries = vec![path([0.0, 1.0, 0.0]), path([0.0; 3]), path([0.0; 3])];
        let p = assemble_symmetric(entries, DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(
            p.matrix(1),
            &DMatrix::from_row_slice(2, 2, &[SQRT_2, 0.0, 0.0, 0.0])
        );
    }

    #[test]
    fn offset_passthrough() {
        let x0 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let entries = (0..6).map(|_| ScalarPath::zeros(grid())).collect();
        let p = assemble_symmetric(entries, x0.clone()).unwrap();
        assert!(p.matrices().iter().all(|x| *x == x0));
    }

    #[test]
    fn symmetric_errors() {
        let entries = |n| {
            (0..n)
                .map(|_| ScalarPath::zeros(grid()))
                .collect::<Vec<_>>()
        };
        let mut bad = DMatrix::zeros(2, 2);
        bad[(0, 1)] = 1.0;
        assert!(matches!(
            assemble_symmetric(entries(3), bad),
            Err(Error::NonSymmetricOffset { .. })
        ));
        let mut mixed = entries(3);
        mixed[2] = ScalarPath::zeros(GridSpec::new(1.0, 4).unwrap());
        assert!(matches!(
            assemble_symmetric(mixed, DMatrix::zeros(2, 2)),
            Err(Error::GridMismatch { entry: 2 })
        ));
        assert!(matches!(
            assemble_symmetric(entries(2), DMatrix::zeros(2, 2)),
            Err(Error::EntryCount { .. })
        ));
    }

    #[test]
    fn hermitian_scaling() {
        // order: b11, Re b12, Im b12, b22
        let entries = vec![
            path([0.0; 3]),
            path([0.0, 1.0, 0.0]),
            path([0.0; 3]),
            path([0.0; 3]),
        ];
        let p = assemble_hermitian(entries, DMatrix::zeros(2, 2)).unwrap();
        let x = p.matrix(1);
        assert_relative_eq!(x[(0, 1)].re, 1.0 / SQRT_2);
        assert_eq!(x[(1, 0)], x[(0, 1)].conj());
        assert_eq!(x.adjoint(), *x);
    }

    #[test]
    fn sampled_paths_are_exactly_symmetric() {
        let g = GridSpec::new(1.0, 16).unwrap();
        let h = HurstParam::new(0.7).unwrap();
        let s = SymmetricFbmSampler::new(g, h, DMatrix::zeros(3, 3)).unwrap();
        let p = s.sample(1, 0);
        assert!(p.matrices().iter().all(|x| x.transpose() == *x));
        let herm = HermitianFbmSampler::new(g, h, DMatrix::zeros(3, 3)).unwrap();
        let q = herm.sample(1, 0);
        assert_eq!(q.entries().len(), 9);
        assert!(q.matrices().iter().all(|x| x.adjoint() == *x));
    }

    #[test]
    fn density_single_eigenvalue() {
        let q = DensityQuery {
            eigenvalues: vec![0.0],
            scale: 1.0,
            ensemble: Ensemble::Orthogonal,
            mode: DensityMode::LogUnnormalized,
        };
        assert_eq!(eigen_density_log(&q).unwrap(), 0.0);
        assert_eq!(
            eigen_density(&DensityQuery {
                mode: DensityMode::Unnormalized,
                ..q
            })
            .unwrap(),
            1.0
        );
    }

    #[test]
    fn density_scale_equivariance() {
        let lam = vec![1.3, 0.2, -0.9];
        let sigma: f64 = 1.7;
        for (ensemble, expected) in [
            (Ensemble::Orthogonal, -3.0 * sigma.ln()),
            (Ensemble::Unitary, -3.0 * sigma.ln()),
        ] {
            let base = DensityQuery {
                eigenvalues: lam.clone(),
                scale: 1.0,
                ensemble,
                mode: DensityMode::LogUnnormalized,
            };
            let scaled = DensityQuery {
                eigenvalues: lam.iter().map(|x| sigma * x).collect(),
                scale: sigma,
                ..base.clone()
            };
            let diff = eigen_density_log(&scaled).unwrap() - eigen_density_log(&base).unwrap();
            assert_relative_eq!(diff, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn density_rejects_unordered() {
        let q = DensityQuery {
            eigenvalues: vec![0.0, 1.0],
            scale: 1.0,
            ensemble: Ensemble::Orthogonal,
            mode: DensityMode::LogUnnormalized,
        };
        assert!(matches!(
            eigen_density_log(&q),
            Err(Error::SimplexViolation { index: 0 })
        ));
        let q = DensityQuery {
            eigenvalues: vec![1.0, 0.0],
            scale: 0.0,
            ..q
        };
        assert!(matches!(eigen_density_log(&q), Err(Error::InvalidScale(_))));
    }
}
