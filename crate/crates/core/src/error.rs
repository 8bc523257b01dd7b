use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the multi-index toolkit.
#[derive(Debug, Error)]
pub enum MimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("memory budget exceeded: {what} needs {needed} bytes, cap is {cap} bytes")]
    BudgetExceeded {
        what: String,
        needed: u128,
        cap: u64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("too much probability mass in empty cells: dropped {dropped:.4} > {limit:.2}")]
    EmptyCells { dropped: f64, limit: f64 },

    #[error("no leap detected from a subspace of dimension {dim} up to order {k_max}")]
    NoLeap { dim: usize, k_max: usize },

    #[error("leap decomposition did not terminate within {0} steps")]
    NonTermination(usize),

    #[error("labels are not discrete for link {0}")]
    NotDiscrete(String),

    #[error("insufficient grid: {0}")]
    InsufficientGrid(String),

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("unsupported format version: {0}")]
    VersionMismatch(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl MimError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MimError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        MimError::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, MimError>;
