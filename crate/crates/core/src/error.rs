use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("condition number is undefined for a zero matrix")]
    UndefinedCondition,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("model generation failed: {0}")]
    Generation(String),

    #[error("weighting error: {0}")]
    Weighting(String),

    #[error("structural error: {0}")]
    Structure(String),

    #[error("order detection failed: {0}")]
    Order(String),

    #[error("unsupported structure: {0}")]
    Unsupported(String),

    #[error("eigenvalue computation did not converge")]
    Eigen,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
