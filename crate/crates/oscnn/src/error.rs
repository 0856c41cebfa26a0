//! Crate-wide error type.
//!
//! Command-line commands map these onto process exit codes, so every variant
//! carries enough context to diagnose a failure from the message alone.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("checksum mismatch in {path}: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum {
        path: PathBuf,
        stored: u32,
        computed: u32,
    },

    #[error("training diverged at iteration {iteration}: {what}")]
    Diverged { iteration: usize, what: String },

    #[error("iteration {iteration} is at or past stop_iteration {stop}: training is complete")]
    TrainingComplete { iteration: usize, stop: usize },

    #[error("class {class:?} has no positive labels; average precision is undefined")]
    NoPositives { class: String },

    #[error("stream mismatch: expected {expected}, got {got}")]
    StreamMismatch { expected: String, got: String },

    #[error("refusing to overwrite {path}; pass --force to allow")]
    WouldOverwrite { path: PathBuf },
}

impl Error {
    /// Shorthand for the pervasive shape error.
    pub fn shape(context: impl Into<String>, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage/config, 2 data, 3 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::InvalidArgument(_) | Error::WouldOverwrite { .. } => 1,
            Error::Diverged { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
