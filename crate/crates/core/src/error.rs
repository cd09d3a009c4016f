use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inputs are individually valid but inconsistent with each other.
    #[error("usage error: {0}")]
    Usage(String),
    /// A quadrature or linear-algebra step did not produce a trustworthy number.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    /// The enumeration oracle found no configuration satisfying complementarity.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// A check refused its input (for example a non-converged solve).
    #[error("refused: {0}")]
    Refused(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
