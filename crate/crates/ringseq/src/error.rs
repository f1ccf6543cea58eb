//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Two tensor shapes that an operation requires to agree do not.
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A precondition of an operation was violated.
    #[error("{op}: {message}")]
    InvalidInput { op: &'static str, message: String },

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite values in {context}")]
    NonFinite { context: String },

    /// A checkpoint file is malformed or inconsistent with the model.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// A configuration file or field is invalid.
    #[error("config: {0}")]
    Config(String),

    /// A dataset, annotation file or manifest is invalid.
    #[error("dataset: {0}")]
    Dataset(String),

    /// A training run cannot continue.
    #[error("training: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Shorthand for [`Error::InvalidInput`] with a formatted message.
    pub fn invalid(op: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidInput {
            op,
            message: message.into(),
        }
    }
}
