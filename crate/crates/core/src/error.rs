use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("degenerate degree at node {node}: {value:e} below floor {eps:e}")]
    DegenerateDegree { node: usize, value: f64, eps: f64 },

    #[error("matrix is not symmetric: max asymmetry {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },

    #[error("degenerate spectrum: lambda_min {lambda_min} == lambda_max {lambda_max}")]
    DegenerateSpectrum { lambda_min: f64, lambda_max: f64 },

    #[error("basis order must be at least 1, got {0}")]
    InvalidOrder(usize),

    #[error("basis was evaluated on a different operator")]
    MismatchedBasis,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("forward trace does not match the model: {0}")]
    MismatchedTrace(String),

    #[error("reference joints are degenerate: triangle area {area:e}")]
    DegenerateReference { area: f64 },

    #[error("sequence too short: {frames} frames cannot fill {chunks} chunks")]
    TooShort { frames: usize, chunks: usize },

    #[error("joint index {index} out of range for {joints} joints")]
    IndexOutOfRange { index: usize, joints: usize },

    #[error("parse error in {file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("missing file: {0}")]
    MissingFile(String),

    #[error("empty evaluation split")]
    EmptySplit,

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("training diverged at epoch {epoch}: loss {loss:e}")]
    DivergedLoss { epoch: usize, loss: f64 },

    #[error("non-finite value produced while updating {what}")]
    NonFiniteUpdate { what: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
