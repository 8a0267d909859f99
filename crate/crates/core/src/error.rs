use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A probability that must be strictly positive was not; usually means
    /// smoothing was skipped upstream.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected k={expected}, got k={actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("geometry undefined: {0}")]
    UndefinedGeometry(String),

    #[error("least-squares fit undefined: {0}")]
    UndefinedFit(String),

    #[error("adaptation diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("{path}:{row}: {message}")]
    Ingestion {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
