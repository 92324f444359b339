use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("kernel is singular at z = 0")]
    SingularPoint,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("integrability requires beta > alpha, got beta = {beta}, alpha = {alpha}")]
    Integrability { beta: f64, alpha: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("node {index} is outside the grid ({len} nodes)")]
    OutsideGrid { index: usize, len: usize },

    #[error("test function support exceeds the box: {0}")]
    SupportViolation(String),

    #[error("unknown profile `{0}`")]
    UnknownProfile(String),

    #[error("malformed field data: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
