//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by calibration, compilation, and execution.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An input was structurally valid but numerically degenerate
    /// (e.g. a zero-norm vector where a direction is required).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A persisted artifact failed validation on load.
    #[error("corrupt data: {0}")]
    CorruptData(String),

    /// The pipeline configuration is inconsistent or incomplete.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateInput(msg.into())
    }

    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::CorruptData(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
