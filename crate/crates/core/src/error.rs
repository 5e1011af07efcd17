use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SkdError>;

#[derive(Debug, Error)]
pub enum SkdError {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A log was taken of a zero probability.
    #[error("infinite loss: probability of class {index} is zero")]
    InfiniteLoss { index: usize },

    /// Training produced a NaN or infinite loss.
    #[error("non-finite loss {value} at batch {batch}, position {position}")]
    NonFiniteLoss {
        batch: u64,
        position: usize,
        value: f64,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SkdError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        SkdError::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SkdError::Io {
            path: path.into(),
            source,
        }
    }
}
