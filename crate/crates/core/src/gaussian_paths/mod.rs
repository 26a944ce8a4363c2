//! Exact sampling of fractional Brownian motion and other centered Gaussian
//! processes on uniform grids.
//!
//! Two samplers are provided: [`CholeskySampler`] factorizes the Gram matrix
//! of an arbitrary covariance once and then draws paths in `O(n^2)`, and
//! [`FbmCirculantSampler`] embeds the fractional Gaussian noise
//! autocovariance in a circulant matrix and draws fBm paths in
//! `O(n log n)`. Both are exact in law on the grid.

mod cholesky;
mod circulant;
pub mod rng;

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cholesky::{sample_gaussian_cholesky, CholeskySampler};
pub use circulant::{sample_fbm_circulant, FbmCirculantSampler};
pub use rng::{Part, SeedSpec};

/// Uniform grid `t_k = k T / n`, `k = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    horizon: f64,
    steps: usize,
}

impl GridSpec {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon {horizon} must be positive"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("steps must be at least 1".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.node(k))
    }

    /// Coarser grid keeping every `stride`-th node.
    pub fn coarsen(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !self.steps.is_multiple_of(stride) {
            return Err(Error::ResolutionMismatch {
                requested: if stride == 0 {
                    0
                } else {
                    self.steps / stride.max(1)
                },
                native: self.steps,
            });
        }
        Self::new(self.horizon, self.steps / stride)
    }
}

/// Hurst index in `[1/2, 1)`. `1/2` is admitted for Brownian reduction checks.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if (0.5..1.0).contains(&h) {
            Ok(Self(h))
        } else {
            Err(Error::InvalidHurst(h))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// True in the open regime `H > 1/2` where the fBm-specific results apply.
    pub fn is_fractional(self) -> bool {
        self.0 > 0.5
    }
}

impl TryFrom<f64> for HurstParam {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

impl From<HurstParam> for f64 {
    fn from(h: HurstParam) -> f64 {
        h.0
    }
}

/// `R(t,s) = (t^{2H} + s^{2H} - |t-s|^{2H}) / 2`.
pub fn fbm_covariance(t: f64, s: f64, hurst: HurstParam) -> f64 {
    let two_h = 2.0 * hurst.value();
    0.5 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h))
}

/// Autocovariance of unit-spaced fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(k: usize, hurst: HurstParam) -> f64 {
    let two_h = 2.0 * hurst.value();
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

pub type CovarianceFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum CovarianceModel {
    Fbm(HurstParam),
    Custom {
        covariance: Arc<CovarianceFn>,
        /// Hölder order in `(1/2, 1)` of the mean-square increments.
        holder_order: f64,
    },
}

impl CovarianceModel {
    pub fn custom<F>(covariance: F, holder_order: f64) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !(holder_order > 0.5 && holder_order < 1.0) {
            return Err(Error::InvalidCovariance(format!(
                "Hölder order {holder_order} outside (1/2, 1)"
            )));
        }
        Ok(Self::Custom {
            covariance: Arc::new(covariance),
            holder_order,
        })
    }

    pub fn covariance(&self, t: f64, s: f64) -> f64 {
        match self {
            Self::Fbm(h) => fbm_covariance(t, s, *h),
            Self::Custom { covariance, .. } => covariance(t, s),
        }
    }

    pub fn holder_order(&self) -> f64 {
        match self {
            Self::Fbm(h) => h.value(),
            Self::Custom { holder_order, .. } => *holder_order,
        }
    }
}

impl fmt::Debug for CovarianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fbm(h) => f.debug_tuple("Fbm").field(&h.value()).finish(),
            Self::Custom { holder_order, .. } => f
                .debug_struct("Custom")
                .field("holder_order", holder_order)
                .finish_non_exhaustive(),
        }
    }
}

/// One sample path on a uniform grid; `values.len() == steps + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarPath {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarPath {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(Error::InvalidGrid(format!(
                "path has {} values for {} steps",
                values.len(),
                grid.steps()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at node {k}")));
        }
        Ok(Self { grid, values })
    }

    /// Path identically zero on the grid.
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.steps() + 1],
        }
    }

    /// Deterministic path `f(t_k)`.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Every `stride`-th node.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        let grid = self.grid.coarsen(stride)?;
        Ok(Self {
            grid,
            values: self.values.iter().step_by(stride).copied().collect(),
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,value")?;
        for (t, v) in self.grid.nodes().zip(&self.values) {
            writeln!(out, "{t:.16e},{v:.16e}")?;
        }
        Ok(())
    }
}

/// Doubles the resolution of a Brownian path by sampling every midpoint from
/// the Brownian bridge between its neighbours.
pub fn brownian_bridge_refine(path: &ScalarPath, seed: SeedSpec) -> Result<ScalarPath> {
    use rand_distr::{Distribution, StandardNormal};
    let grid = GridSpec::new(path.grid.horizon(), 2 * path.grid.steps())?;
    let sd = (path.grid.dt() / 4.0).sqrt();
    let mut rng = seed.rng();
    let v = path.values();
    let mut out = Vec::with_capacity(2 * v.len() - 1);
    for w in v.windows(2) {
        let z: f64 = StandardNormal.sample(&mut rng);
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]) + sd * z);
    }
    out.push(v[v.len() - 1]);
    ScalarPath::new(grid, out)
}
