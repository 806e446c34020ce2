use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FunkError>;

#[derive(Debug, Error)]
pub enum FunkError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("sinogram kind mismatch: expected {expected}, got {got}")]
    KindMismatch { expected: &'static str, got: &'static str },

    #[error("primitive leaks outside the unit ball: {0}")]
    SupportViolation(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at {0}")]
    NonFiniteValue(String),

    #[error("conjugate points: wedge coefficient {0:e} below threshold")]
    ConjugateFailure(f64),

    #[error("dense assembly too large: {cells} cells exceeds limit {limit}")]
    TooLarge { cells: usize, limit: usize },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("harmonic frequency {frequency} must exceed degree {degree}")]
    FrequencyTooLow { degree: usize, frequency: usize },

    #[error("operation requires a full detector circle")]
    PartialScanUnsupported,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FunkError {
    /// True for failures of a numerical procedure rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            FunkError::NoConvergence { .. } | FunkError::ConjugateFailure(_)
        )
    }
}
