use thiserror::Error;

/// Errors raised by tree, map and construction operations.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("structural error: {0}")]
    Structure(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("refinement diverges: forward orbit of {0} does not close up within {1} steps")]
    RefinementDiverges(String, usize),
    #[error("invalid homeomorphism: {0}")]
    InvalidHomeomorphism(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("stage failure: {0}")]
    StageFailure(String),
    #[error("search budget exhausted: {0}")]
    Inconclusive(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
