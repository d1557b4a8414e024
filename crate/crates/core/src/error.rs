use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MmmlError>;

#[derive(Debug, Error)]
pub enum MmmlError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric: max asymmetry {max_asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { max_asymmetry: f64, tolerance: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not SPD: eigenvalue {eigenvalue:e} is at or below the floor {floor:e}")]
    NotPositiveDefinite { eigenvalue: f64, floor: f64 },

    #[error(
        "within-class matrix is not positive definite; regularize it \
         (add eps * tr(W)/N * I with eps > 0) before solving"
    )]
    NeedsRegularization,

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("degenerate image set '{set_id}': {reason}")]
    DegenerateSet { set_id: String, reason: String },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<MmmlError>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("model format error: {0}")]
    Format(String),

    #[error("unsupported model version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
}

impl MmmlError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MmmlError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_fold(self, fold: usize) -> Self {
        MmmlError::Fold {
            fold,
            source: Box::new(self),
        }
    }
}
