use std::path::PathBuf;

use tempcycle_autograd::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value in loss component `{component}`")]
    NonFinite { component: String },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("sequence too short: need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("no frames found in {}", .0.display())]
    NoFrames(PathBuf),
    #[error("invalid frame sequence in {}: {reason}", path.display())]
    FrameSequence { path: PathBuf, reason: String },
    #[error("invalid image {}: {reason}", path.display())]
    InvalidImage { path: PathBuf, reason: String },
    #[error("checkpoint {}: {reason}", path.display())]
    Checkpoint { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
