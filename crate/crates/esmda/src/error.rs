use thiserror::Error;

#[derive(Debug, Error)]
pub enum EsmdaError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A forward evaluation failed twice for the same ensemble slot
    /// (original member plus one resample).
    #[error("forward model failed for member {member}: {message}")]
    Forward { member: usize, message: String },
}

pub type Result<T> = std::result::Result<T, EsmdaError>;
