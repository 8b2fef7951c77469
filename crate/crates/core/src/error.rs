use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("objects live on different grids")]
    GridMismatch,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("kernel is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("operator is not positive semi-definite (eigenvalue {min:e} against largest {max:e})")]
    NotPsd { min: f64, max: f64 },
    #[error("Schatten exponent must be >= 1, got {0}")]
    InvalidNorm(f64),
    #[error("alpha must lie in (0, 0.5], got {0}")]
    InvalidAlpha(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {col}: cannot parse {value:?} as a number")]
    NonNumeric { row: usize, col: usize, value: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by the inputs.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}
