use thiserror::Error;

/// Errors produced by model fitting, querying, control and file handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {required} points, got {got}")]
    TooFewPoints { required: usize, got: usize },

    #[error("time does not increase at sample {index}: {previous} -> {current}")]
    NonIncreasingTime {
        index: usize,
        previous: f64,
        current: f64,
    },

    #[error("gap of {gap} m between samples {index} and {next} exceeds the {max_gap} m limit")]
    GapTooLarge {
        index: usize,
        next: usize,
        gap: f64,
        max_gap: f64,
    },

    #[error("model has no training nodes")]
    EmptyModel,

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("factorization failed; increase the jitter (currently {jitter})")]
    Factorization { jitter: f64 },

    #[error("illegal phase transition {from:?} -> {to:?}")]
    PhaseTransition {
        from: crate::engine::Phase,
        to: crate::engine::Phase,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} contains non-finite values")))
    }
}
