use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("event log is empty")]
    EmptyLog,

    #[error("split error: {0}")]
    Split(String),

    #[error("invalid process specification: {0}")]
    Spec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("prefix of length {len} exceeds the model's maximum length {max}")]
    Length { len: usize, max: usize },

    #[error("position {index} is out of range for a prefix of length {len}")]
    Index { index: usize, len: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },

    #[error("cannot normalize: {0}")]
    Normalization(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no training prefixes could be extracted")]
    NoTrainingData,

    #[error("training diverged at step {step} (loss = {loss})")]
    Divergence { step: usize, loss: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("model `{model}` failed: {source}")]
    Model {
        model: String,
        #[source]
        source: Box<Error>,
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
