use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("basis mismatch: {0} vs {1}")]
    BasisMismatch(String, String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no identified components (all cumulative eigenvalue energy is zero)")]
    NoIdentifiedComponents,

    #[error("rate undefined before identification: component {0} has zero energy")]
    Unidentified(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
