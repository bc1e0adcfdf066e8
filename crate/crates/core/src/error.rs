use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The requested step violates the CFL bound.
    #[error("unstable step: dt = {dt} exceeds dt_max = {dt_max} ({detail})")]
    Stability { dt: f64, dt_max: f64, detail: String },

    #[error("degenerate field: row {row} has non-positive mass {mass}")]
    DegenerateField { row: usize, mass: f64 },

    #[error("evolution diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("step {step} failed: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True if this error (or the error it wraps) reports numerical divergence.
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::Divergence { .. } => true,
            Error::AtStep { source, .. } => source.is_divergence(),
            _ => false,
        }
    }

    pub(crate) fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }
}
