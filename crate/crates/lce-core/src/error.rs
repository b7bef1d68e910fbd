//! Shared error type for the core library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Malformed input data; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Replay windows that cannot be laid out over the log.
    #[error("schedule error: {0}")]
    Schedule(String),

    /// A graph increment referenced an explicit-side node that was not
    /// allocated when the snapshot was built.
    #[error("inductive violation: {0}")]
    InductiveViolation(String),

    #[error("config error: {0}")]
    Config(String),

    /// Tables or graphs whose dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// No user had at least one relevant item, so averaging is undefined.
    #[error("no evaluable users")]
    EmptyEvaluation,

    /// Paired differences with zero sample variance; the t statistic is
    /// undefined unless a variance floor is requested.
    #[error("degenerate variance in paired t-test")]
    DegenerateVariance,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
