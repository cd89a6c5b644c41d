//! Configuration-driven driver for the BDIE solver.
//!
//! Subcommands `solve`, `verify` and `convergence` read a TOML
//! [`config::RunConfig`], write CSV tables into the output directory and print
//! a summary. Exit codes: 0 success, 1 numeric failure, 2 configuration error.

pub mod commands;
pub mod config;
pub mod table;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Maps a core error raised while interpreting configuration values.
    pub fn from_core_config(e: bdie_core::Error) -> Self {
        match e {
            bdie_core::Error::Config { field, message } => CliError::Config { field, message },
            other => CliError::config("config", other.to_string()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numeric(_) | CliError::Output(_) => 1,
        }
    }
}

impl From<bdie_core::Error> for CliError {
    fn from(e: bdie_core::Error) -> Self {
        match e {
            bdie_core::Error::Config { field, message } => CliError::Config { field, message },
            bdie_core::Error::Io(e) => CliError::Output(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "bdie", version, about = "Boundary-domain integral equation solver for div(a grad u) = f")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble and solve the BDIE system, write the solution and a summary.
    Solve,
    /// Run a property suite and report each check against its tolerance.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
    },
    /// Solve at several refinements and report errors and observed orders.
    Convergence {
        /// Comma-separated refinement levels, at least two.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Jumps,
    Green,
    Relations,
    Reduction,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Jumps => "jumps",
            Suite::Green => "green",
            Suite::Relations => "relations",
            Suite::Reduction => "reduction",
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match commands::dispatch(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
