use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },

    #[error("stepper failed at t = {time}: {reason} (tried {attempts} substep refinements)")]
    Stiffness { time: f64, reason: String, attempts: u32 },

    #[error("quadrature did not converge: {0}")]
    NonConvergent(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
