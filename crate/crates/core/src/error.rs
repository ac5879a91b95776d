use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum QcapError {
    /// Shapes or tensor-factor bookkeeping do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested problem exceeds the dense-matrix size guard.
    #[error("resource limit: {0}")]
    Resource(String),

    /// A Monte-Carlo trial budget is too small for the requested estimate.
    #[error("trial budget: {0}")]
    Budget(String),

    /// The information-spectrum window could not be located on the grid.
    #[error("transition window undetermined on grid [{lo}, {hi}]: {reason}")]
    WindowUndetermined { lo: f64, hi: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, QcapError>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(QcapError::Dimension(msg.into()))
}

pub(crate) fn domain_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(QcapError::Domain(msg.into()))
}
