use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CataError> = std::result::Result<T, E>;

#[derive(Error, Debug)]
pub enum CataError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("record {index}: {message}")]
    InvalidRecord { index: usize, message: String },

    #[error("explicit weight tensor would hold {entries} entries, above the limit of {limit}")]
    OracleTooLarge { entries: u128, limit: u128 },

    #[error("training diverged at iteration {iteration} (last finite objective {last_objective:e})")]
    Diverged { iteration: usize, last_objective: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported model format version {0}")]
    FormatVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CataError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CataError::InvalidArgument(msg.into())
    }
}
