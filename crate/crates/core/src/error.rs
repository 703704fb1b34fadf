use thiserror::Error;

/// Errors raised by the CAIA toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaiaError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("singular channel: {0}")]
    Singular(String),
    #[error("degenerate slot pair: kernel has nullity {nullity}, expected 1")]
    Degenerate { nullity: usize },
    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, CaiaError>;

impl From<csv::Error> for CaiaError {
    fn from(e: csv::Error) -> Self {
        CaiaError::Csv(e.to_string())
    }
}

pub(crate) fn param(msg: impl Into<String>) -> CaiaError {
    CaiaError::Parameter(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> CaiaError {
    CaiaError::Shape(msg.into())
}
