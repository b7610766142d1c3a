use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("prompt overflow: {tokens} tokens exceed the available context of {capacity}")]
    PromptOverflow { tokens: usize, capacity: usize },

    #[error("degenerate normalization: {0}")]
    Normalization(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at epoch {epoch}, step {step}: {message}")]
    Divergence {
        epoch: usize,
        step: usize,
        message: String,
    },

    #[error("incompatible checkpoint: {0}")]
    Checkpoint(String),

    #[error("instance {index}: {source}")]
    Instance {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("file error on {path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    pub fn at_instance(self, index: usize) -> Self {
        match self {
            already @ Error::Instance { .. } => already,
            other => Error::Instance {
                index,
                source: Box::new(other),
            },
        }
    }

    /// Process exit code used by the command line driver.
    ///
    /// 1 = configuration, 2 = data, 3 = training failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Checkpoint(_) | Error::PromptOverflow { .. } => 1,
            Error::Parse { .. } | Error::Data(_) | Error::File { .. } => 2,
            Error::Instance { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

pub(crate) fn config_err<T>(message: impl Into<String>) -> Result<T> {
    Err(Error::Config(message.into()))
}

pub(crate) fn shape_err<T>(message: impl Into<String>) -> Result<T> {
    Err(Error::Shape(message.into()))
}
