use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("unsupported bit depth: {0}")]
    UnsupportedDepth(String),

    #[error("truncated image data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("pixel ({row}, {col}) leaves [0, 255]: {value}")]
    PixelRange { row: usize, col: usize, value: i32 },

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("cover {height}x{width} is too small to host an embedding site")]
    CoverTooSmall { height: usize, width: usize },

    #[error("payload infeasible: {0}")]
    Infeasible(String),

    #[error("inconsistent embedding plan: {0}")]
    PlanInconsistent(String),

    #[error("inverse interpolation failed at site(s) {0:?}")]
    SolverFailure(Vec<(usize, usize)>),

    #[error("invalid length prefix: {0}")]
    LengthPrefix(String),

    #[error("invalid stego key: {0}")]
    Key(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
