//! Categorized command-line errors. Each category maps to a distinct
//! nonzero exit code so callers can tell misuse from bad data.

use lce_core::CoreError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Flag or argument misuse.
    #[error("usage error: {0}")]
    Usage(String),

    /// Invalid configuration or schedule.
    #[error("config error: {0}")]
    Config(String),

    /// Unreadable or malformed input data.
    #[error("data error: {0}")]
    Data(String),

    /// Missing or incompatible checkpoint.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(String),

    /// Numerical or evaluation failure inside a command.
    #[error("compute error: {0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Data(_) => 4,
            CliError::Checkpoint(_) => 5,
            CliError::Io(_) => 6,
            CliError::Compute(_) => 7,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> CliError {
        match e {
            CoreError::Config(_) | CoreError::Schedule(_) => CliError::Config(e.to_string()),
            CoreError::Parse { .. } | CoreError::Json(_) => CliError::Data(e.to_string()),
            CoreError::Checkpoint(_) => CliError::Checkpoint(e.to_string()),
            CoreError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Compute(e.to_string()),
        }
    }
}
