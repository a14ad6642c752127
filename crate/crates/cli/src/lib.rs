//! Command-line frontend: `stats → fit → filter → eval → compare → report`,
//! plus `synth` for seeded test data.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 numerical
//! failure.

mod args;
mod commands;
mod config;
mod output;
mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use adathresh_core::bin_stats::BinError;
use adathresh_core::evaluation::EvalError;
use adathresh_core::kitti::DatasetError;
use adathresh_core::synthetic::ScenarioError;
use adathresh_core::threshold::{FitError, ThresholdError};
use clap::Parser;
use thiserror::Error;

pub use args::Cli;
pub use commands::{BinRow, StatsFile};
pub use config::FileConfig;

use args::Command;
use config::Settings;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error(transparent)]
    Bins(#[from] BinError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Internal(String),
}

fn threshold_code(e: &ThresholdError) -> u8 {
    match e {
        ThresholdError::InvalidSingle(_) => 1,
        ThresholdError::MissingScore { .. } => 2,
        _ => 3,
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Bins(_) | CliError::Scenario(_) => 1,
            CliError::Dataset(_)
            | CliError::Io { .. }
            | CliError::Input { .. }
            | CliError::Internal(_) => 2,
            CliError::Fit(_) => 3,
            CliError::Threshold(e) => threshold_code(e),
            CliError::Eval(EvalError::InvalidConfig(_)) => 1,
            CliError::Eval(EvalError::Threshold(e)) => threshold_code(e),
            CliError::Eval(_) => 2,
        }
    }
}

fn dispatch(cli: &Cli, settings: &Settings) -> Result<(), CliError> {
    match &cli.command {
        Command::Stats(c) => commands::stats(settings, c),
        Command::Fit(c) => commands::fit(settings, c),
        Command::Filter(c) => commands::filter(settings, c),
        Command::Eval(c) => commands::eval(settings, c),
        Command::Compare(c) => commands::compare(c),
        Command::Synth(c) => commands::synth(settings, c),
        Command::Report(c) => commands::report(settings, c),
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let settings = Settings::load(cli.config.as_deref())?;
    match settings.jobs(cli.jobs) {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Internal(e.to_string()))?;
            pool.install(|| dispatch(cli, &settings))
        }
        None => dispatch(cli, &settings),
    }
}

/// Parse `args` (program name first), run the command and return the exit
/// code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
