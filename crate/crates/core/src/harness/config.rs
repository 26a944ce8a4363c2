use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_paths::{GridSpec, HurstParam};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    #[default]
    Symmetric,
    Hermitian,
}

/// Named groups of checks, runnable on their own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Simulate,
    Noncollide,
    Variation,
    Selfsim,
    Gradcheck,
    Itocheck,
    Density,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Simulate,
        Suite::Noncollide,
        Suite::Variation,
        Suite::Selfsim,
        Suite::Gradcheck,
        Suite::Itocheck,
        Suite::Density,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Simulate => "simulate",
            Suite::Noncollide => "noncollide",
            Suite::Variation => "variation",
            Suite::Selfsim => "selfsim",
            Suite::Gradcheck => "gradcheck",
            Suite::Itocheck => "itocheck",
            Suite::Density => "density",
        }
    }

    /// Suites that integrate the real-symmetric eigenvalue dynamics.
    fn symmetric_only(self) -> bool {
        matches!(self, Suite::Variation | Suite::Selfsim | Suite::Itocheck)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}`"))
    }
}

/// Starting matrix `X(0)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OffsetSpec {
    #[default]
    Zero,
    Diagonal {
        values: Vec<f64>,
    },
    /// JSON file holding a `d × d` array of rows. Hermitian offsets use
    /// `[re, im]` pairs for each element.
    Dense {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub ensemble: EnsembleKind,
    pub d: usize,
    pub hurst: f64,
    pub horizon: f64,
    pub steps: usize,
    pub replicates: usize,
    pub master_seed: u64,
    pub x0: OffsetSpec,
    pub suites: Vec<Suite>,
    /// Replicate counts for individual suites, overriding `replicates`.
    pub suite_replicates: BTreeMap<Suite, usize>,
    /// Execution settings; they do not affect results and are left out of
    /// the manifest's config echo.
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            ensemble: EnsembleKind::Symmetric,
            d: 2,
            hurst: 0.75,
            horizon: 1.0,
            steps: 1 << 12,
            replicates: 100,
            master_seed: 0,
            x0: OffsetSpec::Zero,
            suites: Vec::new(),
            suite_replicates: BTreeMap::new(),
            output_dir: None,
            threads: None,
        }
    }
}

fn read_dense(path: &Path) -> std::result::Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("x0: cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| format!("x0: {} is not valid JSON: {e}", path.display()))
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(vec![e.to_string()]))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::ConfigInvalid(vec![format!("cannot read {}: {e}", path.display())])
        })?;
        Self::from_json_str(&text)
    }

    pub fn replicates_for(&self, suite: Suite) -> usize {
        self.suite_replicates
            .get(&suite)
            .copied()
            .unwrap_or(self.replicates)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.horizon, self.steps)
    }

    pub fn hurst_param(&self) -> Result<HurstParam> {
        HurstParam::new(self.hurst)
    }

    /// Resolves `x0` to a real symmetric matrix.
    pub fn offset(&self) -> Result<DMatrix<f64>> {
        let d = self.d;
        match &self.x0 {
            OffsetSpec::Zero => Ok(DMatrix::zeros(d, d)),
            OffsetSpec::Diagonal { values } => {
                if values.len() != d {
                    return Err(Error::ConfigInvalid(vec![format!(
                        "x0: {} diagonal values for d = {d}",
                        values.len()
                    )]));
                }
                Ok(DMatrix::from_diagonal(
                    &nalgebra::DVector::from_column_slice(values),
                ))
            }
            OffsetSpec::Dense { path } => {
                let rows: Vec<Vec<f64>> = serde_json::from_value(
                    read_dense(path).map_err(|e| Error::ConfigInvalid(vec![e]))?,
                )
                .map_err(|e| {
                    Error::ConfigInvalid(vec![format!("x0: expected rows of numbers: {e}")])
                })?;
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::ConfigInvalid(vec![format!(
                        "x0: dense offset must be {d} x {d}"
                    )]));
                }
                let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
                if m != m.transpose() {
                    return Err(Error::ConfigInvalid(vec![
                        "x0: dense offset is not symmetric".into(),
                    ]));
                }
                Ok(m)
            }
        }
    }

    /// Resolves `x0` to a Hermitian matrix.
    pub fn offset_hermitian(&self) -> Result<DMatrix<Complex64>> {
        let d = self.d;
        match &self.x0 {
            OffsetSpec::Dense { path } => {
                let rows: Vec<Vec<[f64; 2]>> = serde_json::from_value(
                    read_dense(path).map_err(|e| Error::ConfigInvalid(vec![e]))?,
                )
                .map_err(|e| {
                    Error::ConfigInvalid(vec![format!("x0: expected rows of [re, im] pairs: {e}")])
                })?;
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::ConfigInvalid(vec![format!(
                        "x0: dense offset must be {d} x {d}"
                    )]));
                }
                let m = DMatrix::from_fn(d, d, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1]));
                if m != m.adjoint() {
                    return Err(Error::ConfigInvalid(vec![
                        "x0: dense offset is not Hermitian".into(),
                    ]));
                }
                Ok(m)
            }
            _ => Ok(self.offset()?.map(|v| Complex64::new(v, 0.0))),
        }
    }

    pub fn offset_is_zero(&self) -> Result<bool> {
        Ok(match self.ensemble {
            EnsembleKind::Symmetric => self.offset()?.iter().all(|v| *v == 0.0),
            EnsembleKind::Hermitian => self
                .offset_hermitian()?
                .iter()
                .all(|v| *v == Complex64::new(0.0, 0.0)),
        })
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.d < 2 {
            problems.push(format!("d: must be at least 2, got {}", self.d));
        }
        if self.d > u16::MAX as usize {
            problems.push(format!("d: {} is too large", self.d));
        }
        if !(0.5..1.0).contains(&self.hurst) {
            problems.push(format!("hurst: must lie in [0.5, 1), got {}", self.hurst));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            problems.push(format!(
                "horizon: must be positive and finite, got {}",
                self.horizon
            ));
        }
        if self.steps == 0 {
            problems.push("steps: must be at least 1".into());
        }
        if self.replicates == 0 {
            problems.push("replicates: must be at least 1".into());
        }
        for (suite, m) in &self.suite_replicates {
            if *m == 0 {
                problems.push(format!("suite_replicates.{suite}: must be at least 1"));
            }
        }
        let needs_dyadic = self
            .suites
            .iter()
            .any(|s| matches!(s, Suite::Variation | Suite::Itocheck));
        if needs_dyadic && !(self.steps.is_power_of_two() && self.steps >= 4) {
            problems.push(format!(
                "steps: variation and itocheck need a power of two of at least 4, got {}",
                self.steps
            ));
        }
        if self.ensemble == EnsembleKind::Hermitian {
            for s in self.suites.iter().filter(|s| s.symmetric_only()) {
                problems.push(format!(
                    "suites: `{s}` is only available for the symmetric ensemble"
                ));
            }
        }
        if self.d >= 2 {
            let offset = match self.ensemble {
                EnsembleKind::Symmetric => self.offset().map(|_| ()),
                EnsembleKind::Hermitian => self.offset_hermitian().map(|_| ()),
            };
            if let Err(Error::ConfigInvalid(mut msgs)) = offset {
                problems.append(&mut msgs);
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(problems))
        }
    }
}
