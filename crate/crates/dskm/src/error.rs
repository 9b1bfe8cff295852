use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported kernel family: {0}")]
    UnsupportedFamily(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("target/loss kind mismatch: {0}")]
    TargetMismatch(String),
    #[error("non-finite value encountered at iteration {iteration}: {context}")]
    Divergence { iteration: usize, context: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
