//! `peeriv` command layer: flag and config parsing, subcommands, CSV and
//! manifest output. Parallel work is delegated to the core Monte Carlo runner.

pub mod args;
pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;

use clap::Parser;

pub use args::Cli;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;
pub const EXIT_TOTAL: i32 = 4;

pub const DEFAULT_SEED: u64 = 20240601;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] peeriv_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_TOTAL,
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        args::Command::Simulate(a) => commands::simulate(a),
        args::Command::GraphStats(a) => commands::graph_stats(a),
        args::Command::Bounds(a) => commands::bounds(a),
        args::Command::Diagnose(a) => commands::diagnose(a),
    }
}

/// Parses `argv`, runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
