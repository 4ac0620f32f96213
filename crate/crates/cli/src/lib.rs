// Copyright 2026 The cqsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Command-line driver: config parsing, built-in scenarios, command dispatch
//! and run directories with reproducibility manifests.
//!
//! Exit codes: 0 success, 1 comparison mismatch or I/O failure, 2 invalid
//! config or usage, 3 complete positivity not certified, 4 numerical abort.

pub mod commands;
pub mod config;
pub mod output;
pub mod presets;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{parse_config, ConfigError, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CP: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "CQSIM_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("complete positivity not certified: {0}")]
    NotCertified(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Input(_) => EXIT_CONFIG,
            CliError::NotCertified(_) => EXIT_CP,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Mismatch(_) | CliError::Io { .. } => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cqsim", version, about = "Hybrid classical-quantum dynamics toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Where the configuration comes from and where results go.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Config file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in scenario, used instead of a config file.
    #[arg(long)]
    pub preset: Option<String>,
    /// Run directory; defaults to runs/<command>-<config hash>.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the generator coefficients derived from the configured source.
    Coeffs(Common),
    /// Extract local moments from kernels or an environment correlator.
    Moments(Common),
    /// Certify the Markovian complete-positivity conditions.
    CheckTradeoff(Common),
    /// Certify the nonlocal kernel positivity condition.
    CheckKernel {
        #[command(flatten)]
        common: Common,
        /// Directory of <kind>_<pair>.csv kernel files.
        #[arg(long)]
        kernels: Option<PathBuf>,
        #[arg(long)]
        lambda1: Option<f64>,
        #[arg(long)]
        hbar: Option<f64>,
        /// Points of the evaluation time grid.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Integrate the semi-Wigner master equation on the phase-space grid.
    Evolve(Common),
    /// Average stochastic trajectories.
    Unravel {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// `evolve` CSV to compare the ensemble against.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 3.0)]
        threshold: f64,
    },
    /// Z-scores of an estimate CSV against a reference CSV.
    Compare {
        reference: PathBuf,
        estimate: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    Presets,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Coeffs(_) => "coeffs",
            Command::Moments(_) => "moments",
            Command::CheckTradeoff(_) => "check-tradeoff",
            Command::CheckKernel { .. } => "check-kernel",
            Command::Evolve(_) => "evolve",
            Command::Unravel { .. } => "unravel",
            Command::Compare { .. } => "compare",
            Command::Presets => "presets",
        }
    }
}

/// Configures the global worker pool from `CQSIM_WORKERS`.
pub fn init_workers() -> Result<(), CliError> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got \"{v}\"")))?;
    // A pool built earlier in the process (tests) is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Errors are reported on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Err(e) = init_workers() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::dispatch(cli.command, &argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
