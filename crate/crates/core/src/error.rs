use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SimError {
    /// A caller broke an operation's precondition (duplicate offer, over-fill, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Parameters, profiles or targets that cannot be simulated.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: row {row}: {message}")]
    Load { path: PathBuf, row: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

impl SimError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        SimError::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input (bad config, unreadable or malformed files).
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            SimError::Config(_) | SimError::Load { .. } | SimError::Io { .. } | SimError::Format(_)
        )
    }
}
