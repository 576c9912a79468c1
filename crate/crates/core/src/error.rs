use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Model parameters violate a structural constraint.
    #[error("constraint violation: {0}")]
    Constraint(String),
    /// Not enough data to determine the requested fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// A numerical routine could not meet its accuracy contract.
    #[error("numerical convergence failure: {0}")]
    Convergence(String),
    /// The requested leakage suppression cannot be reached.
    #[error("infeasible suppression target: residual leakage floor {floor:e} exceeds target level {level:e}")]
    Infeasible { floor: f64, level: f64 },
    /// A data file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("{name} must be finite, got {value}")))
    }
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} must be positive and finite, got {value}")))
    }
}

pub(crate) fn ensure_probability(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(domain(format!("{name} must lie in [0, 1], got {value}")))
    }
}
