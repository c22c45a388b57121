use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv at row {row}, column {column}: {message}")]
    MalformedRow { row: usize, column: String, message: String },

    #[error("non-positive value {value} at row {row}, column {column}")]
    NonPositiveValue { row: usize, column: String, value: f64 },

    #[error("unknown asset `{0}`")]
    UnknownAsset(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("index {index} out of range for {len} assets")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("sequence length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("unsupported number of assets {0} (grid methods support K = 2 or K = 3)")]
    UnsupportedDimension(usize),

    #[error("numerical divergence at step {step}: {message}")]
    Divergence { step: usize, message: String },

    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got })
        }
    }
}
