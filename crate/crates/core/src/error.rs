use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("corrupt store: {0}")]
    CorruptStore(String),

    /// The model's reply for a chunk could not be parsed, even after retries.
    #[error("extraction failed for chunk {chunk_id}: {reason}")]
    ExtractionFailure {
        chunk_id: String,
        reason: String,
        raw: String,
    },

    #[error("build failed: {0}")]
    BuildFailure(String),

    /// A structured reply (strategy block, judge rubric) is missing mandatory fields.
    #[error("could not parse model reply: {reason}")]
    ParseFailure { reason: String, raw: String },

    #[error("gateway error: {0}")]
    Gateway(String),

    #[error("no recorded fixture for request {0}")]
    FixtureMissing(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that originate in the model gateway.
    pub fn is_gateway(&self) -> bool {
        matches!(self, Error::Gateway(_) | Error::FixtureMissing(_))
    }
}
