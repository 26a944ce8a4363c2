//! Command line front end: one subcommand per suite plus `all`.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use fdyson::harness::{run_suite, ExperimentConfig, Suite};
use fdyson::Error;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_SUITE_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "fdyson",
    version,
    about = "Simulate matrix fBm eigenvalue processes and check their properties"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment configuration; command line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for manifest.json and CSV output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, env = "FDYSON_THREADS")]
    threads: Option<usize>,

    #[arg(long, global = true)]
    replicates: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Sample paths, covariance and Hölder checks, CSV dumps.
    Simulate,
    /// Minimum eigenvalue gap over all nodes and replicates.
    Noncollide,
    /// 1/H-variation of fBm and of the eigenvalue residuals.
    Variation,
    /// Self-similarity of fBm, eigenvalues and residuals.
    Selfsim,
    /// Eigenvalue derivative formulas against finite differences.
    Gradcheck,
    /// Decomposition identities, Young/Skorohod consistency, H = 1/2 reduction.
    Itocheck,
    /// Gap law of 2 x 2 matrices and negative moments.
    Density,
    /// Every suite.
    All,
}

impl Command {
    fn suites(self) -> Vec<Suite> {
        match self {
            Command::Simulate => vec![Suite::Simulate],
            Command::Noncollide => vec![Suite::Noncollide],
            Command::Variation => vec![Suite::Variation],
            Command::Selfsim => vec![Suite::Selfsim],
            Command::Gradcheck => vec![Suite::Gradcheck],
            Command::Itocheck => vec![Suite::Itocheck],
            Command::Density => vec![Suite::Density],
            Command::All => Suite::ALL.to_vec(),
        }
    }
}

fn build_config(cli: &Cli) -> fdyson::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    config.suites = cli.command.suites();
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = Some(out.clone());
    }
    if let Some(threads) = cli.threads {
        config.threads = Some(threads);
    }
    if let Some(m) = cli.replicates {
        config.replicates = m;
    }
    Ok(config)
}

/// Parses `args` (program name first), runs the selected suites and returns
/// the process exit code: 0 when every check passes, 1 when any fails, 2 for
/// configuration errors. Usage errors exit through clap.
pub fn cli_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_PASS
            };
        }
    };
    let config = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => return report_error(&e),
    };
    match run_suite(&config) {
        Ok(manifest) => {
            for suite in &manifest.suites {
                for r in &suite.reports {
                    println!(
                        "{:<4} {:<11} {:<40} statistic={:<12.6e} threshold={:.6e}",
                        if r.passed { "ok" } else { "FAIL" },
                        suite.suite,
                        r.name,
                        r.statistic,
                        r.threshold
                    );
                }
            }
            if let Some(dir) = &config.output_dir {
                println!("wrote {}", dir.join("manifest.json").display());
            }
            if manifest.passed {
                EXIT_PASS
            } else {
                EXIT_SUITE_FAILURE
            }
        }
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &Error) -> i32 {
    match e {
        Error::ConfigInvalid(msgs) => {
            eprintln!("invalid configuration:");
            for m in msgs {
                eprintln!("  {m}");
            }
            EXIT_CONFIG
        }
        other => {
            eprintln!("error: {other}");
            EXIT_SUITE_FAILURE
        }
    }
}
