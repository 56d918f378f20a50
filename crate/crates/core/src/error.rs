use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{}:{line}: index {index} out of range (bound {bound})", path.display())]
    IndexOutOfRange { path: PathBuf, line: usize, index: usize, bound: usize },

    #[error("{}: {what} has {found} rows, expected {expected}", path.display())]
    RowCount { path: PathBuf, what: &'static str, found: usize, expected: usize },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("historical cache is invalid for these parameters: {0}")]
    CacheInvalid(String),

    #[error("label {label} of node {node} is outside [0, {classes})")]
    LabelOutOfRange { node: usize, label: usize, classes: usize },

    #[error("training set is empty")]
    EmptyTrainSet,

    #[error("node set is empty")]
    EmptyNodeSet,

    #[error("non-finite gradient entry in layer {layer} at flat index {index}")]
    NonFiniteGradient { layer: usize, index: usize },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Mutually incompatible settings; the message names both of them.
    #[error("{0}")]
    Usage(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, msg: msg.into() }
    }
}
