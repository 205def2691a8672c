use std::io;

use thiserror::Error;

/// Errors raised anywhere in the summarization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("schema mismatch: expected {expected} values, got {got}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("every candidate pair has already been asked")]
    Exhausted,
    #[error("operation not allowed in stage {stage}: {message}")]
    Precondition { stage: String, message: String },
    #[error("conflict: {0}")]
    Conflict(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
