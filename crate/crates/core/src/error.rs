use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Arguments outside the domain of an operation (e.g. `k > b`).
    #[error("domain error: {0}")]
    Domain(String),
    /// Invalid model or numerical parameter.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Request exceeds a size guard (state-space enumeration and the like).
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
