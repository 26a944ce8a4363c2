//! Experiment orchestration: configuration, deterministic parallel
//! replication, the named suites and manifest output.

mod config;
pub mod suites;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{EnsembleKind, ExperimentConfig, OffsetSpec, Suite};
pub use suites::{Artifact, StreamUse, SuiteContext, SuiteOutput};

use crate::error::{Error, Result};
use crate::statistics::TestReport;

/// Environment variable consulted for the worker count when the config does
/// not set one.
pub const THREADS_ENV: &str = "FDYSON_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScheme {
    pub master_seed: u64,
    pub generator: String,
    pub key: String,
    pub stream_id: String,
    pub streams: Vec<StreamUse>,
}

impl SeedScheme {
    fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            generator: "ChaCha20".into(),
            key: "master_seed (u64 LE) | replicate (u64 LE) | \"fdyson-stream-v1\"".into(),
            stream_id: "family << 48 | k << 32 | h << 16 | part (0 real, 1 imaginary)".into(),
            streams: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub passed: bool,
    pub reports: Vec<TestReport>,
    /// File names written to the output directory.
    pub artifacts: Vec<String>,
}

/// Settings that do not influence any reported number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionInfo {
    pub threads: usize,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub seed_scheme: SeedScheme,
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
    pub execution: ExecutionInfo,
}

impl RunManifest {
    /// JSON without the `execution` block: a pure function of the config,
    /// the seed and the tool version.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("execution");
        }
        serde_json::to_string_pretty(&v).expect("manifest serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn failed_reports(&self) -> impl Iterator<Item = (Suite, &TestReport)> {
        self.suites.iter().flat_map(|s| {
            s.reports
                .iter()
                .filter(|r| !r.passed)
                .map(move |r| (s.suite, r))
        })
    }
}

fn resolve_threads(config: &ExperimentConfig) -> Result<usize> {
    if let Some(t) = config.threads {
        return Ok(t);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| {
            Error::ConfigInvalid(vec![format!(
                "{THREADS_ENV}: expected a thread count, got `{v}`"
            )])
        }),
        Err(_) => Ok(0),
    }
}

pub fn run_one(ctx: &SuiteContext, suite: Suite) -> SuiteOutput {
    match suite {
        Suite::Simulate => suites::run_simulate(ctx),
        Suite::Noncollide => suites::run_noncollide(ctx),
        Suite::Variation => suites::run_variation(ctx),
        Suite::Selfsim => suites::run_selfsim(ctx),
        Suite::Gradcheck => suites::run_gradcheck(ctx),
        Suite::Itocheck => suites::run_itocheck(ctx),
        Suite::Density => suites::run_density(ctx),
    }
}

/// Runs the selected suites and, when `output_dir` is set, writes
/// `manifest.json` and the CSV artifacts there. Suite failures are recorded in
/// the manifest; only configuration and I/O problems are returned as errors.
pub fn run_suite(config: &ExperimentConfig) -> Result<RunManifest> {
    let started = Instant::now();
    let ctx = SuiteContext::new(config)?;
    let threads = resolve_threads(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::ConfigInvalid(vec![format!("threads: {e}")]))?;

    let mut selected: Vec<Suite> = Vec::new();
    for s in &config.suites {
        if !selected.contains(s) {
            selected.push(*s);
        }
    }

    let mut scheme = SeedScheme::new(config.master_seed);
    let mut results = Vec::new();
    let mut artifacts = Vec::new();
    for suite in selected {
        let output = pool.install(|| run_one(&ctx, suite));
        scheme.streams.extend(output.streams);
        let names = output
            .artifacts
            .into_iter()
            .map(|a| {
                let name = format!("{suite}_{}", a.name);
                artifacts.push((name.clone(), a.contents));
                name
            })
            .collect();
        results.push(SuiteResult {
            suite,
            passed: output.reports.iter().all(|r| r.passed),
            reports: output.reports,
            artifacts: names,
        });
    }

    let manifest = RunManifest {
        tool: "fdyson".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        seed_scheme: scheme,
        passed: results.iter().all(|r| r.passed),
        suites: results,
        execution: ExecutionInfo {
            threads: pool.current_num_threads(),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    };
    if let Some(dir) = &config.output_dir {
        write_outputs(dir, &manifest, &artifacts)?;
    }
    Ok(manifest)
}

fn write_outputs(
    dir: &Path,
    manifest: &RunManifest,
    artifacts: &[(String, Vec<u8>)],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, contents) in artifacts {
        std::fs::write(dir.join(name), contents)?;
    }
    std::fs::write(dir.join("manifest.json"), manifest.to_json())?;
    Ok(())
}
