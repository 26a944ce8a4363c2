use rand_distr::{Distribution, StandardNormal};

use super::{CovarianceModel, GridSpec, ScalarPath, SeedSpec};
use crate::error::{Error, Result};

const RELATIVE_TOLERANCE: f64 = 1e-10;

/// Exact sampler for a centered Gaussian process on a grid, backed by a
/// diagonally pivoted Cholesky factor of the Gram matrix on `t_1..t_n`.
///
/// The factor is computed once; each [`sample`](Self::sample) costs
/// `O(n * rank)`.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    grid: GridSpec,
    /// Row `i` holds the factor row of grid node `perm[i] + 1`.
    factor: Vec<Vec<f64>>,
    perm: Vec<usize>,
    rank: usize,
}

impl CholeskySampler {
    pub fn new(model: &CovarianceModel, grid: GridSpec) -> Result<Self> {
        let n = grid.steps();
        let times: Vec<f64> = (1..=n).map(|k| grid.node(k)).collect();
        let gram: Vec<Vec<f64>> = times
            .iter()
            .map(|&t| times.iter().map(|&s| model.covariance(t, s)).collect())
            .collect();
        for (i, row) in gram.iter().enumerate() {
            for j in 0..i {
                let (a, b) = (row[j], gram[j][i]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::InvalidCovariance(format!(
                        "covariance not symmetric at nodes ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let (factor, perm, rank) = pivoted_cholesky(&gram)?;
        Ok(Self {
            grid,
            factor,
            perm,
            rank,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Numerical rank of the Gram matrix.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn sample(&self, seed: SeedSpec) -> ScalarPath {
        let mut rng = seed.rng();
        let z: Vec<f64> = (0..self.rank)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let mut values = vec![0.0; self.grid.steps() + 1];
        for (row, &node) in self.factor.iter().zip(&self.perm) {
            values[node + 1] = row.iter().zip(&z).map(|(l, z)| l * z).sum();
        }
        ScalarPath::new(self.grid, values).expect("factor rows are finite")
    }
}

/// One-shot convenience wrapper around [`CholeskySampler`].
pub fn sample_gaussian_cholesky(
    model: &CovarianceModel,
    grid: GridSpec,
    seed: SeedSpec,
) -> Result<ScalarPath> {
    Ok(CholeskySampler::new(model, grid)?.sample(seed))
}

/// Returns `(L, perm, rank)` with `A[perm[i]][perm[j]] = sum_r L[i][r] L[j][r]`.
fn pivoted_cholesky(a: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<usize>, usize)> {
    let n = a.len();
    let max_diag = (0..n).map(|i| a[i][i]).fold(0.0f64, f64::max);
    let tol = RELATIVE_TOLERANCE * max_diag.max(f64::MIN_POSITIVE);

    let mut perm: Vec<usize> = (0..n).collect();
    let mut diag: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    let mut l = vec![vec![0.0; n]; n];
    let mut rank = n;

    for j in 0..n {
        let (p, &dp) = diag[j..]
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .map(|(i, d)| (i + j, d))
            .expect("non-empty");
        let min_rest = diag[j..].iter().copied().fold(f64::INFINITY, f64::min);
        if min_rest < -tol {
            return Err(Error::FactorizationFailure {
                pivot: j,
                residual: min_rest,
            });
        }
        if dp <= tol {
            // Remaining Schur complement must be negligible for a PSD input.
            for i in j..n {
                for k in j..i {
                    let s = a[perm[i]][perm[k]] - (0..j).map(|r| l[i][r] * l[k][r]).sum::<f64>();
                    if s.abs() > tol {
                        return Err(Error::FactorizationFailure {
                            pivot: j,
                            residual: s,
                        });
                    }
                }
            }
            rank = j;
            break;
        }
        perm.swap(j, p);
        diag.swap(j, p);
        l.swap(j, p);

        let pivot = dp.sqrt();
        l[j][j] = pivot;
        for i in (j + 1)..n {
            let dot: f64 = (0..j).map(|r| l[i][r] * l[j][r]).sum();
            let v = (a[perm[i]][perm[j]] - dot) / pivot;
            l[i][j] = v;
            diag[i] -= v * v;
        }
    }

    for row in &mut l {
        row.truncate(rank);
    }
    Ok((l, perm, rank))
}
