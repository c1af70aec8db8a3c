//! Error taxonomy shared by every module.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad fraction, unknown dataset name, mismatched
    /// scenario/generator wiring, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Unreadable or malformed input artifact (missing file, bad header, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Data fails a semantic requirement (single-class labels, empty table, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Dimension or shape mismatch between arrays.
    #[error("shape error: {0}")]
    Shape(String),

    /// Non-finite value where a finite one is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A caller broke an API contract (stale cache, empty argument, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// Training diverged or otherwise failed.
    #[error("training error at epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },

    /// Malformed service request (wrong input dimension).
    #[error("request error: {0}")]
    Request(String),

    /// Service query budget exhausted.
    #[error("quota error: {0}")]
    Quota(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
