//! Orchestration behind the `jhl` binary: configuration, the four commands
//! and their CSV/JSON outputs.

// `!(x > 0.0)` is the idiom that also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

pub use commands::{run, Command, Outcome};
pub use config::RunConfig;

/// Failures that end a run, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(jhl_core::Error),
    Io(String),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
            CliError::Verification(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numeric(_) => "numeric",
            CliError::Io(_) => "io",
            CliError::Verification(_) => "verification",
        }
    }

    /// One-line JSON error record.
    pub fn record(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Verification(m) => f.write_str(m),
            CliError::Numeric(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<jhl_core::Error> for CliError {
    fn from(e: jhl_core::Error) -> Self {
        CliError::Numeric(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
