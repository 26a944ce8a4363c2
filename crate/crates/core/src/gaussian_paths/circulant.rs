use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

use super::{fgn_autocovariance, GridSpec, HurstParam, ScalarPath, SeedSpec};
use crate::error::{Error, Result};

const CLAMP_TOLERANCE: f64 = 1e-8;

/// Circulant-embedding sampler for fBm on a fixed grid.
///
/// The unit-lag fractional Gaussian noise autocovariance `r(0..=n)` is
/// embedded in a circulant of size `2n`; its spectrum comes from one FFT at
/// construction. A sample is the real part of the inverse transform of
/// `sqrt(spectrum / 2n)` times complex white noise, scaled by `(T/n)^H` and
/// summed.
#[derive(Clone)]
pub struct FbmCirculantSampler {
    grid: GridSpec,
    hurst: HurstParam,
    sqrt_spectrum: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FbmCirculantSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FbmCirculantSampler")
            .field("grid", &self.grid)
            .field("hurst", &self.hurst)
            .finish_non_exhaustive()
    }
}

impl FbmCirculantSampler {
    pub fn new(grid: GridSpec, hurst: HurstParam) -> Result<Self> {
        let n = grid.steps();
        let m = 2 * n;
        let mut row: Vec<Complex64> = (0..m)
            .map(|k| {
                let lag = if k <= n { k } else { m - k };
                Complex64::new(fgn_autocovariance(lag, hurst), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(m).process(&mut row);

        let max = row.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
        let min = row.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        if min < -CLAMP_TOLERANCE * max {
            return Err(Error::EmbeddingNotPSD {
                min_eigenvalue: min,
                max_eigenvalue: max,
            });
        }
        let scale = 1.0 / m as f64;
        let sqrt_spectrum = row.iter().map(|c| (c.re.max(0.0) * scale).sqrt()).collect();
        Ok(Self {
            grid,
            hurst,
            sqrt_spectrum,
            fft: planner.plan_fft_inverse(m),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn hurst(&self) -> HurstParam {
        self.hurst
    }

    /// Fractional Gaussian noise increments on the grid (length `n`).
    pub fn sample_increments(&self, seed: SeedSpec) -> Vec<f64> {
        let n = self.grid.steps();
        let mut rng = seed.rng();
        let mut buf: Vec<Complex64> = self
            .sqrt_spectrum
            .iter()
            .map(|&s| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(s * re, s * im)
            })
            .collect();
        self.fft.process(&mut buf);
        let step = self.grid.dt().powf(self.hurst.value());
        buf[..n].iter().map(|c| c.re * step).collect()
    }

    pub fn sample(&self, seed: SeedSpec) -> ScalarPath {
        let increments = self.sample_increments(seed);
        let mut values = Vec::with_capacity(increments.len() + 1);
        let mut acc = 0.0;
        values.push(acc);
        for dx in increments {
            acc += dx;
            values.push(acc);
        }
        ScalarPath::new(self.grid, values).expect("finite fbm path")
    }
}

/// One-shot convenience wrapper around [`FbmCirculantSampler`].
pub fn sample_fbm_circulant(
    grid: GridSpec,
    hurst: HurstParam,
    seed: SeedSpec,
) -> Result<ScalarPath> {
    Ok(FbmCirculantSampler::new(grid, hurst)?.sample(seed))
}
