use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, RomError>;

#[derive(Debug, Error)]
pub enum RomError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("{routine} did not converge within {iterations} iterations")]
    NoConvergence {
        routine: &'static str,
        iterations: usize,
    },

    #[error("singular system in {0}")]
    Singular(&'static str),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("parameter {value} outside interpolation range [{min}, {max}]")]
    Extrapolation { value: f64, min: f64, max: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error(transparent)]
    Format(#[from] crate::format::FormatError),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl RomError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        RomError::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        RomError::InvalidInput(msg.into())
    }
}
