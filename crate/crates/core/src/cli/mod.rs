//! Configuration-driven experiment runner behind the `rare-al` binary.

pub mod commands;
pub mod config;
pub mod format;

use std::fmt;
use std::process::ExitCode;

pub use commands::{cmd_bench, cmd_run, cmd_truth, BenchOptions, RunOptions, TruthOptions};
pub use config::{DistributionSpec, ProblemName, ProblemSpec, RunConfig, TruthSpec};

/// Failure of a CLI command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration (exit 2).
    Config(String),
    /// Anything going wrong after the configuration was accepted (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
