use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("voxel ({x}, {y}, {z}) lies outside dims {dims:?}")]
    OutOfBounds {
        x: i64,
        y: i64,
        z: i64,
        dims: [usize; 3],
    },

    #[error("mask contains no voxels")]
    EmptyMask,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range for {len} elements")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("matrix dimension {n} exceeds the dense solver cap {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {worst_residual:.3e})")]
    NotConverged {
        iterations: usize,
        worst_residual: f64,
        residuals: Vec<f64>,
    },

    #[error(
        "LDL^T factorization broke down at pivot {pivot} (|d| = {value:.3e}) for shift {shift}"
    )]
    FactorizationBreakdown {
        pivot: usize,
        value: f64,
        shift: f64,
    },

    #[error("statistics error: {0}")]
    Stats(String),

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

pub type Result<T, E = Error> = std::result::Result<T, E>;
