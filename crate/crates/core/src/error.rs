//! Error type shared across the pipeline.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// A JSONL record that failed to parse, with its 1-based line number.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Post embedding length disagrees with the corpus-declared dimension.
    #[error("post {post_id}, line {line}: embedding dim {got} \u{2260} {expected}")]
    EmbeddingDim {
        post_id: String,
        line: usize,
        got: usize,
        expected: usize,
    },

    /// Invalid configuration or argument.
    #[error("{0}")]
    Invalid(String),

    /// Precondition on the data was violated (single-class input, missing
    /// record, dimension mismatch at predict time, ...).
    #[error("{0}")]
    Data(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
