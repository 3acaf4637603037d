use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or arguments.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("invalid data: {0}")]
    Data(String),

    /// An id or value that cannot belong to the structure it was found in.
    #[error("corrupt data: {0}")]
    Corruption(String),

    /// Two inputs that must agree in size do not.
    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: String,
        left: usize,
        right: usize,
    },

    /// A non-finite value appeared during training.
    #[error("non-finite value in tensor `{0}`")]
    NonFinite(String),

    /// Checkpoint header, shape or version problems.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
