//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. The variants separate caller
//! mistakes (bad configuration, mismatched dimensions) from data problems
//! (non-finite or degenerate inputs) and from numerical failures discovered
//! mid-computation, so binaries can map them to distinct exit codes.

/// Errors produced by the inference engines and their supporting types.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is outside its documented domain.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Two inputs that must agree in dimension do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An input or intermediate value is NaN or infinite where finiteness is
    /// required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The input is structurally valid but carries no usable information
    /// (empty sample, zero spread, collapsed particle population, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A numerical method failed to converge or produced an invalid
    /// intermediate (non-positive-definite matrix, diverging Newton steps, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand used by validation helpers.
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn non_finite(msg: impl Into<String>) -> Self {
        Error::NonFinite(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
