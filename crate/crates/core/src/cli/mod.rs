//! Command-line front end: config loading, sweeps, fits and file output.
//!
//! Exit codes: 0 success, 1 I/O error, 2 configuration error, 3 parse error,
//! 4 convergence failure or oracle disagreement, 5 instability only,
//! 6 insufficient data or coverage.

mod commands;
pub mod config;
pub mod io;

use std::fmt::Display;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::fit::FitError;
use crate::oracle::OracleError;

pub use commands::{cmd_fit, cmd_modes, cmd_oracle, cmd_psd, cmd_spectrum, cmd_spring};
pub use config::{load, LoadedConfig, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("configuration error in {path}: {message}")]
    Config { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("instability: {0}")]
    Instability(String),
    #[error("insufficient data: {0}")]
    Coverage(String),
}

impl CliError {
    pub fn config(path: &str, message: impl Display) -> Self {
        Self::Config {
            path: path.to_string(),
            message: message.to_string(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config { .. } => 2,
            CliError::Parse(_) => 3,
            CliError::Convergence(_) => 4,
            CliError::Instability(_) => 5,
            CliError::Coverage(_) => 6,
        }
    }

    pub(crate) fn from_fit(stage: &str, e: FitError) -> Self {
        let msg = format!("{stage}: {e}");
        match e {
            FitError::InvalidInput(_) => CliError::Parse(msg),
            FitError::Coverage(_) | FitError::InsufficientData(_) | FitError::DegenerateSlopes(_) => CliError::Coverage(msg),
            FitError::Model(_) | FitError::Dynamics(_) => CliError::config(stage, e),
            FitError::NoConvergence { .. } | FitError::NoDips | FitError::TooFewDips { .. } | FitError::ModelMismatch(_) => {
                CliError::Convergence(msg)
            }
        }
    }

    pub(crate) fn from_oracle(e: OracleError) -> Self {
        match e {
            OracleError::Unstable { .. } => CliError::Instability(e.to_string()),
            OracleError::InsufficientSignal(_) => CliError::Convergence(e.to_string()),
            _ => CliError::config("oracle", e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Spring,
    Psd,
    Modes,
    Fit,
    Oracle,
}

/// Flags shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dump_trajectories: bool,
}

/// Files written and the exit code, which may be nonzero even when files were written.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(files: Vec<PathBuf>, summary: Vec<String>) -> Self {
        Self {
            files,
            summary,
            exit_code: 0,
        }
    }
}

/// Output directory: `--out`, else the config's `out`, else the working directory.
fn out_dir(cfg: &LoadedConfig, opts: &Options) -> Result<PathBuf, CliError> {
    let dir = match (&opts.out, &cfg.run.out) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => cfg.resolve(d),
        (None, None) => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

pub fn run(cmd: Command, opts: &Options) -> Result<Outcome, CliError> {
    let cfg = load(&opts.config, opts.seed)?;
    let out = out_dir(&cfg, opts)?;
    match cmd {
        Command::Spectrum => cmd_spectrum(&cfg, &out),
        Command::Spring => cmd_spring(&cfg, &out),
        Command::Psd => cmd_psd(&cfg, &out),
        Command::Modes => cmd_modes(&cfg, &out),
        Command::Fit => cmd_fit(&cfg, &out),
        Command::Oracle => cmd_oracle(&cfg, &out, opts.dump_trajectories),
    }
}
