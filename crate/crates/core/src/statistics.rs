//! Estimators and tests used to check the simulated processes: p-variation,
//! Gaussian absolute moments, eigenvalue gap statistics, Hölder regression,
//! Kolmogorov–Smirnov tests, self-similarity, negative moments and a
//! normality diagnostic.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::gaussian_paths::{GridSpec, HurstParam, ScalarPath};
use crate::spectral::EigenPath;

/// Asymptotic Kolmogorov–Smirnov coefficient `c(α)` at `α = 0.01`.
pub const KS_C_001: f64 = 1.628;

/// `V_n^p = Σ_i |X(t_{i+1}) - X(t_i)|^p` over the uniform `n`-partition.
/// `n` must divide the native resolution of the path.
pub fn p_variation(path: &ScalarPath, p: f64, n: usize) -> Result<f64> {
    let native = path.grid().steps();
    if n == 0 || !native.is_multiple_of(n) {
        return Err(Error::ResolutionMismatch {
            requested: n,
            native,
        });
    }
    let stride = native / n;
    Ok(path
        .values()
        .iter()
        .step_by(stride)
        .collect::<Vec<_>>()
        .windows(2)
        .map(|w| (w[1] - w[0]).abs().powf(p))
        .sum())
}

/// `E|Z|^p = 2^{p/2} Γ((p+1)/2) / √π` for standard normal `Z`.
pub fn abs_moment_std_normal(p: f64) -> f64 {
    2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / PI.sqrt()
}

/// `√2 t E|Z|^{1/H}`, the stated `1/H`-variation of the eigenvalue
/// residual processes on `[0, t]`.
pub fn expected_y_variation(hurst: HurstParam, t: f64) -> f64 {
    SQRT_2 * t * abs_moment_std_normal(1.0 / hurst.value())
}

/// Limit of `V_n^{1/H}` for `X = Σ_k ∫ u_k δB_k` driven by independent fBms:
/// `∫_0^T E_ξ|⟨u_s, ξ⟩|^{1/H} ds` with `ξ` standard normal. Since
/// `⟨u, ξ⟩ ~ N(0, |u|²)` the inner expectation is `|u_s|^{1/H} E|Z|^{1/H}`.
///
/// `norms[m]` is `|u(t_m)|`; the time integral uses the trapezoid rule.
pub fn multidim_variation_limit(grid: &GridSpec, norms: &[f64], hurst: HurstParam) -> f64 {
    let p = 1.0 / hurst.value();
    let dt = grid.dt();
    let integral: f64 = norms
        .windows(2)
        .map(|w| 0.5 * (w[0].powf(p) + w[1].powf(p)) * dt)
        .sum();
    integral * abs_moment_std_normal(p)
}

/// Ensemble summary of `V_n^p` across dyadic resolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub exponent: f64,
    pub resolutions: Vec<usize>,
    /// `estimates[r][j]` for resolution `r` and replicate `j`.
    pub estimates: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub target: f64,
    /// `|mean - target| / target` per resolution.
    pub relative_errors: Vec<f64>,
    /// Empirical `L¹` error `mean_j |V - target|` per resolution.
    pub l1_errors: Vec<f64>,
}

impl VariationReport {
    pub fn l1_monotone(&self) -> bool {
        self.l1_errors.windows(2).all(|w| w[1] < w[0])
    }

    pub fn final_relative_error(&self) -> f64 {
        *self.relative_errors.last().unwrap_or(&f64::NAN)
    }
}

pub fn variation_report(
    paths: &[ScalarPath],
    exponent: f64,
    resolutions: &[usize],
    target: f64,
) -> Result<VariationReport> {
    if paths.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted_res = resolutions.to_vec();
    sorted_res.sort_unstable();
    let per_path = paths
        .iter()
        .map(|p| {
            sorted_res
                .iter()
                .map(|&n| p_variation(p, exponent, n))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    VariationReport::from_estimates(exponent, &sorted_res, &per_path, target)
}

impl VariationReport {
    /// Builds the summary from `per_replicate[j][r]`, the estimate of
    /// replicate `j` at `resolutions[r]`.
    pub fn from_estimates(
        exponent: f64,
        resolutions: &[usize],
        per_replicate: &[Vec<f64>],
        target: f64,
    ) -> Result<Self> {
        if per_replicate.is_empty() {
            return Err(Error::EmptySample);
        }
        if resolutions.iter().any(|n| !n.is_power_of_two())
            || resolutions.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InsufficientData(
                "variation resolutions must be ascending powers of two".into(),
            ));
        }
        if let Some(bad) = per_replicate.iter().find(|e| e.len() != resolutions.len()) {
            return Err(Error::DimensionMismatch {
                left: bad.len(),
                right: resolutions.len(),
            });
        }
        let estimates: Vec<Vec<f64>> = (0..resolutions.len())
            .map(|r| per_replicate.iter().map(|e| e[r]).collect())
            .collect();
        let means: Vec<f64> = estimates.iter().map(|e| mean(e)).collect();
        let standard_errors = estimates.iter().map(|e| standard_error(e)).collect();
        let relative_errors = means.iter().map(|m| (m - target).abs() / target).collect();
        let l1_errors = estimates
            .iter()
            .map(|e| e.iter().map(|v| (v - target).abs()).sum::<f64>() / e.len() as f64)
            .collect();
        Ok(Self {
            exponent,
            resolutions: resolutions.to_vec(),
            estimates,
            means,
            standard_errors,
            target,
            relative_errors,
            l1_errors,
        })
    }
}

/// Smallest adjacent eigenvalue gap over nodes `m >= 1`.
pub fn min_gap(ep: &EigenPath) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..ep.dim().saturating_sub(1) {
        for (a, b) in ep.lambda(i).iter().zip(ep.lambda(i + 1)).skip(1) {
            best = best.min(a - b);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub exponent: f64,
    /// 95% interval from the regression standard error.
    pub ci_low: f64,
    pub ci_high: f64,
    pub slope: f64,
    pub lags: Vec<usize>,
    pub mean_square_increments: Vec<f64>,
}

pub const HOLDER_MIN_REPLICATES: usize = 100;

/// Regresses `log E|x(t+δ) - x(t)|²` on `log δ` over dyadic lags
/// `δ = 4, 8, …, n/8` grid steps (the two finest lags are skipped) and
/// returns half the slope. The lags must span at least two decades.
pub fn holder_exponent(paths: &[ScalarPath]) -> Result<HolderEstimate> {
    holder_exponent_with(paths, HOLDER_MIN_REPLICATES)
}

pub fn holder_exponent_with(paths: &[ScalarPath], min_replicates: usize) -> Result<HolderEstimate> {
    if paths.len() < min_replicates {
        return Err(Error::InsufficientData(format!(
            "{} replicates, need at least {min_replicates}",
            paths.len()
        )));
    }
    let grid = *paths[0].grid();
    if paths.iter().any(|p| *p.grid() != grid) {
        return Err(Error::GridMismatch { entry: 0 });
    }
    let n = grid.steps();
    let lags: Vec<usize> = (2..)
        .map(|k| 1usize << k)
        .take_while(|&lag| lag * 8 <= n)
        .collect();
    if lags.len() < 2 || (*lags.last().unwrap() as f64 / lags[0] as f64) < 100.0 {
        return Err(Error::InsufficientData(format!(
            "grid of {n} steps does not give lags spanning two decades"
        )));
    }
    let msi: Vec<f64> = lags
        .iter()
        .map(|&lag| {
            let (sum, count) = paths.iter().fold((0.0, 0usize), |(s, c), p| {
                let v = p.values();
                let part: f64 = (0..=n - lag).map(|m| (v[m + lag] - v[m]).powi(2)).sum();
                (s + part, c + n - lag + 1)
            });
            sum / count as f64
        })
        .collect();
    let x: Vec<f64> = lags.iter().map(|&l| (l as f64 * grid.dt()).ln()).collect();
    let y: Vec<f64> = msi.iter().map(|v| v.ln()).collect();
    let fit = ols(&x, &y);
    Ok(HolderEstimate {
        exponent: fit.slope / 2.0,
        ci_low: (fit.slope - 1.96 * fit.slope_se) / 2.0,
        ci_high: (fit.slope + 1.96 * fit.slope_se) / 2.0,
        slope: fit.slope,
        lags,
        mean_square_increments: msi,
    })
}

/// Ordinary least squares fit `y = intercept + slope x`.
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

pub fn ols(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_se = if x.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LinearFit {
        slope,
        intercept,
        slope_se,
    }
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// `c(0.01) √((m+n)/(mn))`.
pub fn ks_critical_value(m: usize, n: usize) -> f64 {
    KS_C_001 * ((m + n) as f64 / (m as f64 * n as f64)).sqrt()
}

/// One-sample statistic `sup |F_n - F|` against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let s = sorted(sample);
    let n = s.len() as f64;
    Ok(s.iter().enumerate().fold(0.0f64, |d, (k, &x)| {
        let f = cdf(x);
        d.max(f - k as f64 / n).max((k + 1) as f64 / n - f)
    }))
}

/// `c(0.01) / √n`.
pub fn ks_one_sample_critical_value(n: usize) -> f64 {
    KS_C_001 / (n as f64).sqrt()
}

/// Outcome of one statistical check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    #[serde(with = "nan_as_null")]
    pub statistic: f64,
    #[serde(with = "nan_as_null")]
    pub threshold: f64,
    pub passed: bool,
    pub sample_sizes: Vec<usize>,
    /// Master seed the samples were drawn with, if any.
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

/// JSON has no NaN; checks that could not run carry `null` instead.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl TestReport {
    /// Passing iff `statistic <= threshold`.
    pub fn upper_bound(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            passed: statistic <= threshold,
            sample_sizes: Vec::new(),
            seed: None,
            details: serde_json::Value::Null,
        }
    }

    /// Passing iff `statistic > threshold`.
    pub fn lower_bound(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self {
            passed: statistic > threshold,
            ..Self::upper_bound(name, statistic, threshold)
        }
    }

    /// A check that could not be carried out; recorded as a failure.
    pub fn errored(name: impl Into<String>, error: &Error) -> Self {
        Self {
            name: name.into(),
            statistic: f64::NAN,
            threshold: f64::NAN,
            passed: false,
            sample_sizes: Vec::new(),
            seed: None,
            details: serde_json::json!({ "error": error.to_string() }),
        }
    }

    pub fn with_sizes(mut self, sizes: Vec<usize>) -> Self {
        self.sample_sizes = sizes;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_details(mut self, details: serde_json::Value) -> Self {
        self.details = details;
        self
    }
}

/// Per-coordinate KS of `X_i(at)` against `a^H X_i(t)`; passes when every
/// statistic is below the 1% critical value. The statistic reported is the
/// largest ratio of KS distance to its critical value.
///
/// `offset_is_zero` states whether the process started at `0`; the
/// self-similarity property only holds in that case.
pub fn self_similarity_check(
    name: &str,
    at_t: &[Vec<f64>],
    at_at: &[Vec<f64>],
    a: f64,
    hurst: HurstParam,
    offset_is_zero: bool,
) -> Result<TestReport> {
    if !offset_is_zero {
        return Err(Error::AssumptionViolated(
            "self-similarity needs the process to start at 0".into(),
        ));
    }
    if at_t.len() != at_at.len() {
        return Err(Error::DimensionMismatch {
            left: at_t.len(),
            right: at_at.len(),
        });
    }
    if !(a > 0.0) {
        return Err(Error::InvalidScale(a));
    }
    let factor = a.powf(hurst.value());
    let mut stats = Vec::with_capacity(at_t.len());
    let mut worst: f64 = 0.0;
    for (x, y) in at_t.iter().zip(at_at) {
        let scaled: Vec<f64> = x.iter().map(|v| factor * v).collect();
        let d = ks_two_sample(y, &scaled)?;
        let crit = ks_critical_value(y.len(), scaled.len());
        worst = worst.max(d / crit);
        stats.push(serde_json::json!({ "ks": d, "critical": crit }));
    }
    Ok(TestReport::upper_bound(name, worst, 1.0)
        .with_sizes(vec![
            at_t.first().map_or(0, Vec::len),
            at_at.first().map_or(0, Vec::len),
        ])
        .with_details(serde_json::json!({ "a": a, "hurst": hurst.value(), "coordinates": stats })))
}

/// Empirical `E[gap^{-q}]` for gap samples at a fixed time, `q < 2`.
pub fn negative_moment_probe(gaps: &[f64], q: f64) -> Result<f64> {
    if q >= 2.0 {
        return Err(Error::QTooLarge(q));
    }
    if gaps.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(gaps.iter().map(|g| g.powf(-q)).sum::<f64>() / gaps.len() as f64)
}

/// Log-log slope of negative-moment estimates across sample times; the
/// expected value is `-qH`.
pub fn negative_moment_exponent(times: &[f64], estimates: &[f64]) -> f64 {
    let x: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = estimates.iter().map(|e| e.ln()).collect();
    ols(&x, &y).slope
}

/// Normality diagnostic: no pass/fail semantics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianityReport {
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Large-sample standard errors `√(6/n)` and `√(24/n)`.
    pub skewness_se: f64,
    pub kurtosis_se: f64,
    /// KS distance to the normal law with the sample mean and variance.
    pub ks_fitted_normal: f64,
}

pub const GAUSSIANITY_MIN_SAMPLES: usize = 2000;

pub fn gaussianity_probe(samples: &[f64]) -> Result<GaussianityReport> {
    if samples.len() < GAUSSIANITY_MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples, need at least {GAUSSIANITY_MIN_SAMPLES}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let m = mean(samples);
    let central = |k: i32| samples.iter().map(|x| (x - m).powi(k)).sum::<f64>() / n;
    let m2 = central(2);
    let skewness = central(3) / m2.powf(1.5);
    let excess_kurtosis = central(4) / (m2 * m2) - 3.0;
    let normal = Normal::new(m, m2.sqrt())
        .map_err(|_| Error::InsufficientData(format!("degenerate sample variance {m2}")))?;
    let ks = ks_one_sample(samples, |x| normal.cdf(x))?;
    Ok(GaussianityReport {
        samples: samples.len(),
        mean: m,
        variance: m2,
        skewness,
        excess_kurtosis,
        skewness_se: (6.0 / n).sqrt(),
        kurtosis_se: (24.0 / n).sqrt(),
        ks_fitted_normal: ks,
    })
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation over `√n`.
pub fn standard_error(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}
