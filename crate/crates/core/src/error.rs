use thiserror::Error;

/// Errors raised by the model, estimator and sampler routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class index {class} invalid for a head with {classes} classes")]
    InvalidClass { class: usize, classes: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Diverged {
        iteration: usize,
        loss: f64,
        /// Last parameter vector with a finite loss, widened to `f64`.
        last_finite: Vec<f64>,
    },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("matrix is not symmetric (|a_ij - a_ji| = {0})")]
    NotSymmetric(f64),

    #[error("dense matrix guard: dimension {dim} exceeds {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("undefined statistic: {0}")]
    Degenerate(String),

    #[error("sampler aborted: {0}")]
    SamplerAborted(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
