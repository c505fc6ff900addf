use thiserror::Error;

/// Errors raised by the tailgate library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sample is empty")]
    EmptySample,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("row {row} is the zero vector; polar decomposition is undefined")]
    ZeroRow { row: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: usize },

    #[error("insufficient data: {n} observations, at least {min} required")]
    InsufficientData { n: usize, min: usize },

    #[error("insufficient exceedances: {count} above threshold, at least {required} required")]
    InsufficientExceedances { count: usize, required: usize },

    #[error("path too short for segmentation: {len} usable levels, at least 4 required")]
    PathTooShort { len: usize },

    #[error("fit and path are defined over different grids: {0}")]
    GridMismatch(String),

    #[error("row {row}, column {col}: {reason}")]
    Cell {
        row: usize,
        col: usize,
        reason: String,
    },

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
