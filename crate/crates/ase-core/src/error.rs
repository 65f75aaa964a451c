use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad dimensions, unknown names, incompatible checkpoints.
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse: missing caches, mismatched goal variants, empty inputs.
    #[error("usage error: {0}")]
    Usage(String),

    /// A non-finite value appeared where the math requires finite numbers.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed dataset, checkpoint, or config file.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
