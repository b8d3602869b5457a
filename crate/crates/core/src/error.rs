use thiserror::Error;

/// Errors raised by the gait library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaitError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} = {value} outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("degenerate gait: {0}")]
    DegenerateGait(String),

    #[error("state inconsistent with gait regime: {0}")]
    StateInvalid(String),

    #[error("empty flight window: T_f min {min} > max {max}")]
    InfeasibleWindow { min: f64, max: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("QP solver failure: {0}")]
    SolverFailure(String),

    #[error("no viable step: {0}")]
    Unviable(String),
}

pub type Result<T> = std::result::Result<T, GaitError>;

pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GaitError::InvalidInput(format!("{what} is not finite")))
    }
}
