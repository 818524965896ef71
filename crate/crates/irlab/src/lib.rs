//! File formats, experiment configuration, and the command-line front end
//! for the `irlab-core` retrieval diagnostics library.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod formats;
pub mod manifest;
pub mod pipeline;
pub mod report;

use std::fmt;

/// Errors split by exit code: configuration problems exit 1, runtime
/// failures exit 2.
#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error: {e:#}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

/// Marks an error as a configuration problem (exit 1).
pub trait ConfigContext<T> {
    fn config_err(self) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> ConfigContext<T> for Result<T, E> {
    fn config_err(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Config(e.into()))
    }
}
