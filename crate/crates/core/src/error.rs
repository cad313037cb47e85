use std::path::PathBuf;

/// Errors raised by the solver library.
#[derive(Debug, thiserror::Error)]
pub enum MpmError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("index {index} out of range for {what} (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("material point {point} at ({x:.6}, {y:.6}) lies outside the background grid")]
    OutOfDomain { point: usize, x: f64, y: f64 },

    #[error("divergence at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("non-physical state: {0}")]
    NonPhysical(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MpmError> = std::result::Result<T, E>;

impl MpmError {
    /// Re-tag a numerical failure with the step at which it surfaced.
    pub fn at_step(self, step: usize) -> MpmError {
        match self {
            MpmError::Divergence { .. } | MpmError::Config(_) | MpmError::Io(_) => self,
            other => MpmError::Divergence {
                step,
                reason: other.to_string(),
            },
        }
    }
}
