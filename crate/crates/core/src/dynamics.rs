//! Eigenvalue dynamics of matrix fBm.
//!
//! Along a sampled path the ordered eigenvalues split as
//!
//! ```text
//! λ_i(t) = λ_i(0) + Y_i(t) + 2H Σ_{j≠i} ∫_0^t s^{2H-1} / (λ_i(s) - λ_j(s)) ds
//! ```
//!
//! where `Y_i` is a Skorohod integral of the eigenvalue gradient against the
//! entry paths. [`extract_y`] obtains `Y_i` by subtracting the quadrature of
//! the drift, [`young_skorohod_y`] rebuilds it independently as a pathwise
//! Riemann–Stieltjes sum minus the trace correction, and [`dyson_euler`]
//! integrates the classical `H = 1/2` Dyson SDE as a reference.

use std::f64::consts::SQRT_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_paths::rng::family;
use crate::gaussian_paths::{brownian_bridge_refine, GridSpec, HurstParam, ScalarPath, SeedSpec};
use crate::matrix_ensemble::SymMatrixPath;
use crate::spectral::{eigen_derivatives, eigen_path, EigenPath};

/// Eigenvalue gaps below this are treated as a numerical collision.
pub const GAP_TOLERANCE: f64 = 1e-14;

/// Treatment of `[0, t_1]` when the eigenvalues coincide at `t = 0`
/// (typically `X(0) = 0`). With a simple spectrum at `t = 0` the plain
/// trapezoid rule is used regardless.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FirstCellRule {
    /// Integrate the local power law: gaps grow like `s^H`, so the integrand
    /// behaves like `c s^{H-1}` and the cell contributes `g(t_1) t_1 / H`.
    #[default]
    PowerLaw,
    /// Drop the first cell.
    Ignore,
}

/// Evaluation point of the pathwise Riemann–Stieltjes sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum YoungRule {
    /// `f(t_m) Δx_m`.
    LeftPoint,
    /// `(f(t_m) + f(t_{m+1})) Δx_m / 2`. Converges to the Young integral for
    /// `H > 1/2` and to the Stratonovich integral at `H = 1/2`.
    #[default]
    Trapezoid,
}

fn time_weight(t: f64, hurst: HurstParam) -> f64 {
    t.powf(2.0 * hurst.value() - 1.0)
}

fn check_gaps(ep: &EigenPath, from: usize) -> Result<()> {
    let d = ep.dim();
    for m in from..=ep.grid().steps() {
        for i in 0..d.saturating_sub(1) {
            let gap = ep.lambda(i)[m] - ep.lambda(i + 1)[m];
            if !(gap >= GAP_TOLERANCE) {
                return Err(Error::GapBelowTolerance {
                    node: m,
                    pair: (i, i + 1),
                    gap,
                });
            }
        }
    }
    Ok(())
}

fn simple_spectrum_at_start(ep: &EigenPath) -> bool {
    (0..ep.dim().saturating_sub(1)).all(|i| ep.lambda(i)[0] - ep.lambda(i + 1)[0] >= GAP_TOLERANCE)
}

/// Cumulative quadrature of per-node integrands `g[i][m]` with the
/// first-cell handling described on [`FirstCellRule`]. `g[i][0]` is only
/// read when the spectrum is simple at `t = 0`.
fn cumulative_quadrature(
    grid: &GridSpec,
    g: &[Vec<f64>],
    simple_start: bool,
    hurst: HurstParam,
    rule: FirstCellRule,
) -> Vec<Vec<f64>> {
    let n = grid.steps();
    let dt = grid.dt();
    g.iter()
        .map(|gi| {
            let mut out = Vec::with_capacity(n + 1);
            out.push(0.0);
            let first = if simple_start {
                0.5 * (gi[0] + gi[1]) * dt
            } else {
                match rule {
                    FirstCellRule::PowerLaw => gi[1] * dt / hurst.value(),
                    FirstCellRule::Ignore => 0.0,
                }
            };
            let mut acc = first;
            out.push(acc);
            for m in 1..n {
                acc += 0.5 * (gi[m] + gi[m + 1]) * dt;
                out.push(acc);
            }
            out
        })
        .collect()
}

/// Drift integrand `2H s^{2H-1} Σ_{j≠i} 1/(λ_i - λ_j)` at every node, with
/// each pair evaluated once so the `i`-sum cancels.
fn drift_integrand(ep: &EigenPath, hurst: HurstParam, simple_start: bool) -> Vec<Vec<f64>> {
    let d = ep.dim();
    let n = ep.grid().steps();
    let mut g = vec![vec![0.0; n + 1]; d];
    let start = if simple_start { 0 } else { 1 };
    for (m, t) in ep.grid().nodes().enumerate().skip(start) {
        let weight = 2.0 * hurst.value() * time_weight(t, hurst);
        for i in 0..d {
            for j in (i + 1)..d {
                let w = weight / (ep.lambda(i)[m] - ep.lambda(j)[m]);
                g[i][m] += w;
                g[j][m] -= w;
            }
        }
    }
    g
}

/// Drift trajectories `D_i(t_m)` with the default first-cell rule.
pub fn drift_integral(ep: &EigenPath, hurst: HurstParam) -> Result<Vec<Vec<f64>>> {
    drift_integral_with(ep, hurst, FirstCellRule::default())
}

pub fn drift_integral_with(
    ep: &EigenPath,
    hurst: HurstParam,
    rule: FirstCellRule,
) -> Result<Vec<Vec<f64>>> {
    check_gaps(ep, 1)?;
    let simple = simple_spectrum_at_start(ep);
    let g = drift_integrand(ep, hurst, simple);
    Ok(cumulative_quadrature(ep.grid(), &g, simple, hurst, rule))
}

/// Eigenvalues split into start value, drift and Skorohod residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DysonDecomposition {
    pub grid: GridSpec,
    pub hurst: HurstParam,
    pub first_cell: FirstCellRule,
    pub initial: Vec<f64>,
    pub lambdas: Vec<Vec<f64>>,
    pub drift: Vec<Vec<f64>>,
    pub residual: Vec<Vec<f64>>,
}

impl DysonDecomposition {
    pub fn dim(&self) -> usize {
        self.initial.len()
    }

    pub fn y_path(&self, i: usize) -> ScalarPath {
        ScalarPath::new(self.grid, self.residual[i].clone()).expect("finite residual")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,i,lambda,drift,Y")?;
        for (m, t) in self.grid.nodes().enumerate() {
            for i in 0..self.dim() {
                writeln!(
                    out,
                    "{t:.16e},{},{:.16e},{:.16e},{:.16e}",
                    i + 1,
                    self.lambdas[i][m],
                    self.drift[i][m],
                    self.residual[i][m]
                )?;
            }
        }
        Ok(())
    }
}

/// `Y_i = λ_i - λ_i(0) - D_i`.
pub fn extract_y(ep: &EigenPath, hurst: HurstParam) -> Result<DysonDecomposition> {
    extract_y_with(ep, hurst, FirstCellRule::default())
}

pub fn extract_y_with(
    ep: &EigenPath,
    hurst: HurstParam,
    rule: FirstCellRule,
) -> Result<DysonDecomposition> {
    let drift = drift_integral_with(ep, hurst, rule)?;
    let initial = ep.at(0);
    let residual = (0..ep.dim())
        .map(|i| {
            ep.lambda(i)
                .iter()
                .zip(&drift[i])
                .map(|(l, dr)| l - initial[i] - dr)
                .collect()
        })
        .collect();
    Ok(DysonDecomposition {
        grid: *ep.grid(),
        hurst,
        first_cell: rule,
        initial,
        lambdas: ep.trajectories().to_vec(),
        drift,
        residual,
    })
}

/// Comparison of the two routes to `Y` at one or more resolutions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct YoungCheckReport {
    pub rule: YoungRule,
    /// Number of grid steps, ascending.
    pub resolutions: Vec<usize>,
    /// `max_discrepancy[r][i]`: max over nodes of `|Y_young - Y_extract|`.
    pub max_discrepancy: Vec<Vec<f64>>,
    /// `ratios[r][i] = max_discrepancy[r][i] / max_discrepancy[r + 1][i]`.
    pub ratios: Vec<Vec<f64>>,
}

impl YoungCheckReport {
    fn finish(mut entries: Vec<(usize, Vec<f64>)>, rule: YoungRule) -> Self {
        entries.sort_by_key(|e| e.0);
        let resolutions: Vec<usize> = entries.iter().map(|e| e.0).collect();
        let max_discrepancy: Vec<Vec<f64>> = entries.into_iter().map(|e| e.1).collect();
        let ratios = max_discrepancy
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| a / b).collect())
            .collect();
        Self {
            rule,
            resolutions,
            max_discrepancy,
            ratios,
        }
    }

    /// Discrepancy strictly decreasing in resolution for every eigenvalue.
    pub fn is_monotone(&self) -> bool {
        self.max_discrepancy
            .windows(2)
            .all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| b < a))
    }
}

/// `Y` rebuilt as a Riemann–Stieltjes sum `Σ_{k≤h} ∫ ∂Φ_i/∂b_kh db_kh` minus
/// the trace correction `∫ H s^{2H-1} Σ_{k≤h} ∂²Φ_i/∂b_kh² ds`.
///
/// `ep` must be the eigenpath of `path` with frames retained; every node,
/// including `t = 0`, needs a simple spectrum. The report compares the result
/// against [`extract_y`] at this resolution.
pub fn young_skorohod_y(
    path: &SymMatrixPath,
    ep: &EigenPath,
    hurst: HurstParam,
    rule: YoungRule,
) -> Result<(Vec<Vec<f64>>, YoungCheckReport)> {
    let frames = ep
        .frames()
        .ok_or_else(|| Error::AssumptionViolated("eigenpath frames were not retained".into()))?;
    if path.grid() != ep.grid() || path.dim() != ep.dim() {
        return Err(Error::GridMismatch { entry: 0 });
    }
    let derivatives = frames
        .iter()
        .enumerate()
        .map(|(m, dec)| {
            eigen_derivatives(dec).map_err(|e| match e {
                Error::NotVeryGood { reason, .. } => Error::NotVeryGood {
                    node: Some(m),
                    reason,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let d = ep.dim();
    let n = ep.grid().steps();
    let entries = path.entries();

    let mut young = vec![vec![0.0; n + 1]; d];
    for (i, yi) in young.iter_mut().enumerate() {
        let mut acc = 0.0;
        for m in 0..n {
            let step: f64 = entries
                .iter()
                .enumerate()
                .map(|(e, b)| {
                    let db = b.values()[m + 1] - b.values()[m];
                    let g = match rule {
                        YoungRule::LeftPoint => derivatives[m].gradient[i][e],
                        YoungRule::Trapezoid => {
                            0.5 * (derivatives[m].gradient[i][e]
                                + derivatives[m + 1].gradient[i][e])
                        }
                    };
                    g * db
                })
                .sum();
            acc += step;
            yi[m + 1] = acc;
        }
    }

    let correction_integrand: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            ep.grid()
                .nodes()
                .zip(&derivatives)
                .map(|(t, der)| hurst.value() * time_weight(t, hurst) * der.hessian_trace(i))
                .collect()
        })
        .collect();
    let correction = cumulative_quadrature(
        ep.grid(),
        &correction_integrand,
        true,
        hurst,
        FirstCellRule::default(),
    );

    let y: Vec<Vec<f64>> = young
        .iter()
        .zip(&correction)
        .map(|(s, c)| s.iter().zip(c).map(|(s, c)| s - c).collect())
        .collect();

    let reference = extract_y(ep, hurst)?;
    let discrepancy = y
        .iter()
        .zip(&reference.residual)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    Ok((y, YoungCheckReport::finish(vec![(n, discrepancy)], rule)))
}

/// Runs [`young_skorohod_y`] on `path` observed at each stride and collects
/// the discrepancies into one report (resolutions ascending).
pub fn young_consistency(
    path: &SymMatrixPath,
    hurst: HurstParam,
    strides: &[usize],
    rule: YoungRule,
) -> Result<YoungCheckReport> {
    let mut entries = Vec::with_capacity(strides.len());
    for &stride in strides {
        let sub = path.subsample(stride)?;
        let ep = eigen_path(&sub, true)?;
        let (_, report) = young_skorohod_y(&sub, &ep, hurst, rule)?;
        entries.push((sub.grid().steps(), report.max_discrepancy[0].clone()));
    }
    Ok(YoungCheckReport::finish(entries, rule))
}

/// `log(λ_i - λ_j)` on nodes `t0_index..=n` obtained as
/// `log gap(t_0) + ∫_{t_0}^t (dλ_i - dλ_j) / (λ_i - λ_j)` by a Riemann–Stieltjes
/// sum.
pub fn young_log_gap(
    ep: &EigenPath,
    i: usize,
    j: usize,
    t0_index: usize,
    rule: YoungRule,
) -> Result<Vec<f64>> {
    if i == j || i >= ep.dim() || j >= ep.dim() {
        return Err(Error::AssumptionViolated(format!(
            "invalid eigenvalue pair ({i}, {j})"
        )));
    }
    if t0_index == 0 || t0_index > ep.grid().steps() {
        return Err(Error::AssumptionViolated(format!(
            "start node {t0_index} must lie in 1..={}",
            ep.grid().steps()
        )));
    }
    let gap: Vec<f64> = ep.lambda(i)[t0_index..]
        .iter()
        .zip(&ep.lambda(j)[t0_index..])
        .map(|(a, b)| a - b)
        .collect();
    if let Some(k) = gap.iter().position(|g| !(*g >= GAP_TOLERANCE)) {
        return Err(Error::GapBelowTolerance {
            node: t0_index + k,
            pair: (i, j),
            gap: gap[k],
        });
    }
    let mut out = Vec::with_capacity(gap.len());
    let mut acc = gap[0].ln();
    out.push(acc);
    for w in gap.windows(2) {
        let f = match rule {
            YoungRule::LeftPoint => 1.0 / w[0],
            YoungRule::Trapezoid => 0.5 * (1.0 / w[0] + 1.0 / w[1]),
        };
        acc += f * (w[1] - w[0]);
        out.push(acc);
    }
    Ok(out)
}

/// Explicit Euler–Maruyama for `dλ_i = √2 dW_i + Σ_{j≠i} dt / (λ_i - λ_j)`.
///
/// No reflection is applied: if a step breaks the strict ordering the run
/// aborts with [`Error::OrderingViolated`].
pub fn dyson_euler(noises: &[ScalarPath], initial: &[f64]) -> Result<EigenPath> {
    let d = initial.len();
    if noises.len() != d {
        return Err(Error::DimensionMismatch {
            left: noises.len(),
            right: d,
        });
    }
    if let Some(k) = initial.windows(2).position(|w| w[0] <= w[1]) {
        return Err(Error::SimplexViolation { index: k });
    }
    let grid = *noises[0].grid();
    if let Some(bad) = noises.iter().position(|p| *p.grid() != grid) {
        return Err(Error::GridMismatch { entry: bad });
    }
    let n = grid.steps();
    let dt = grid.dt();
    let mut lambdas: Vec<Vec<f64>> = initial
        .iter()
        .map(|&l| {
            let mut v = Vec::with_capacity(n + 1);
            v.push(l);
            v
        })
        .collect();
    let mut current = initial.to_vec();
    let mut push = vec![0.0; d];
    for m in 0..n {
        push.iter_mut().for_each(|p| *p = 0.0);
        for i in 0..d {
            for j in (i + 1)..d {
                let w = dt / (current[i] - current[j]);
                push[i] += w;
                push[j] -= w;
            }
        }
        for i in 0..d {
            let dw = noises[i].values()[m + 1] - noises[i].values()[m];
            current[i] += SQRT_2 * dw + push[i];
        }
        if current.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::OrderingViolated { node: m + 1 });
        }
        for (l, c) in lambdas.iter_mut().zip(&current) {
            l.push(*c);
        }
    }
    EigenPath::from_trajectories(grid, lambdas)
}

/// [`dyson_euler`] that, on an ordering violation, refines every driving
/// path by Brownian bridge interpolation and retries, up to
/// `max_refinements` times. The result is reported on the original grid.
///
/// Bridge points for refinement level `l` of noise `i` come from stream
/// `bridge_seed` with entry `(i, l)` in the bridge family.
pub fn dyson_euler_refining(
    noises: &[ScalarPath],
    initial: &[f64],
    bridge_seed: SeedSpec,
    max_refinements: usize,
) -> Result<(EigenPath, usize)> {
    let mut current = noises.to_vec();
    let mut level = 0;
    loop {
        match dyson_euler(&current, initial) {
            Ok(ep) => {
                if level == 0 {
                    return Ok((ep, 0));
                }
                let stride = 1 << level;
                let lambdas = ep
                    .trajectories()
                    .iter()
                    .map(|l| l.iter().step_by(stride).copied().collect())
                    .collect();
                return Ok((
                    EigenPath::from_trajectories(*noises[0].grid(), lambdas)?,
                    level,
                ));
            }
            Err(Error::OrderingViolated { node }) if level < max_refinements => {
                let _ = node;
                level += 1;
                current = current
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        brownian_bridge_refine(
                            p,
                            bridge_seed.family(family::BRIDGE).entry(i, level),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn h(x: f64) -> HurstParam {
        HurstParam::new(x).unwrap()
    }

    #[test]
    fn constant_gap_drift_closed_form() {
        let grid = GridSpec::new(1.0, 256).unwrap();
        let c = 0.8;
        let ep = EigenPath::from_trajectories(grid, vec![vec![c / 2.0; 257], vec![-c / 2.0; 257]])
            .unwrap();
        for hurst in [0.5, 0.6, 0.75] {
            let d = drift_integral(&ep, h(hurst)).unwrap();
            // trapezoid error on s^{2H-1} is O(dt^{2H})
            assert_relative_eq!(d[0][256], 1.0 / c, max_relative = 2e-3);
            for (a, b) in d[0].iter().zip(&d[1]) {
                assert_eq!(a + b, 0.0);
            }
        }
    }

    #[test]
    fn constant_path_residual_cancels_drift() {
        let grid = GridSpec::new(1.0, 64).unwrap();
        let ep =
            EigenPath::from_trajectories(grid, vec![vec![3.0; 65], vec![2.0; 65], vec![1.0; 65]])
                .unwrap();
        let dec = extract_y(&ep, h(0.7)).unwrap();
        for i in 0..3 {
            for m in 0..=64 {
                assert_eq!(dec.residual[i][m], -dec.drift[i][m]);
            }
        }
    }

    #[test]
    fn collision_aborts() {
        let grid = GridSpec::new(1.0, 2).unwrap();
        let ep = EigenPath::from_trajectories(grid, vec![vec![1.0, 0.5, 1.0], vec![0.0, 0.5, 0.0]])
            .unwrap();
        assert!(matches!(
            drift_integral(&ep, h(0.75)),
            Err(Error::GapBelowTolerance { node: 1, .. })
        ));
    }

    #[test]
    fn power_law_first_cell() {
        // gap = 2 s^H exactly: D_1 = 2H ∫ s^{2H-1}/(2 s^H) ds = t^H
        let hurst = h(0.75);
        let grid = GridSpec::new(1.0, 1024).unwrap();
        let up: Vec<f64> = grid.nodes().map(|t| t.powf(0.75)).collect();
        let down: Vec<f64> = up.iter().map(|x| -x).collect();
        let ep = EigenPath::from_trajectories(grid, vec![up, down]).unwrap();
        let d = drift_integral(&ep, hurst).unwrap();
        assert_relative_eq!(d[0][1024], 1.0, max_relative = 1e-4);
        let ignored = drift_integral_with(&ep, hurst, FirstCellRule::Ignore).unwrap();
        assert!(ignored[0][1024] < d[0][1024]);
    }

    #[test]
    fn log_gap_constant_and_exponential() {
        let grid = GridSpec::new(1.0, 4096).unwrap();
        let ep =
            EigenPath::from_trajectories(grid, vec![vec![1.0; 4097], vec![-1.0; 4097]]).unwrap();
        let lg = young_log_gap(&ep, 0, 1, 100, YoungRule::LeftPoint).unwrap();
        assert!(lg.iter().all(|v| *v == 2f64.ln()));

        let up: Vec<f64> = grid.nodes().map(f64::exp).collect();
        let ep = EigenPath::from_trajectories(grid, vec![up, vec![0.0; 4097]]).unwrap();
        for rule in [YoungRule::LeftPoint, YoungRule::Trapezoid] {
            let lg = young_log_gap(&ep, 0, 1, 2048, rule).unwrap();
            let err = lg
                .iter()
                .zip(grid.nodes().skip(2048))
                .map(|(v, t)| (v - t).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-3, "{rule:?}: {err}");
        }
        assert!(young_log_gap(&ep, 0, 0, 1, YoungRule::Trapezoid).is_err());
        assert!(young_log_gap(&ep, 0, 1, 0, YoungRule::Trapezoid).is_err());
    }

    #[test]
    fn euler_zero_noise_matches_gap_ode() {
        let grid = GridSpec::new(1.0, 1 << 14).unwrap();
        let zero = ScalarPath::zeros(grid);
        let ep = dyson_euler(&[zero.clone(), zero], &[1.0, -1.0]).unwrap();
        // g' = 2/g, g(0) = 2 => g(1) = sqrt(8)
        assert_relative_eq!(ep.lambda(0)[1 << 14], 2f64.sqrt(), max_relative = 1e-4);
    }

    #[test]
    fn euler_rejects_bad_start_and_coarse_steps() {
        let grid = GridSpec::new(1.0, 1).unwrap();
        let zero = ScalarPath::zeros(grid);
        assert!(matches!(
            dyson_euler(&[zero.clone(), zero.clone()], &[0.0, 0.0]),
            Err(Error::SimplexViolation { .. })
        ));
        let kick = ScalarPath::new(grid, vec![0.0, -10.0]).unwrap();
        assert!(matches!(
            dyson_euler(&[kick, zero], &[0.1, -0.1]),
            Err(Error::OrderingViolated { node: 1 })
        ));
    }
}
