use std::path::PathBuf;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left} and {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("{op}: non-finite value in output")]
    NonFinite { op: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("graph: {0}")]
    Graph(String),

    #[error("parameter `{name}`: store holds {found:?}, graph expects {expected:?}")]
    StoreMismatch {
        name: String,
        expected: Option<Shape>,
        found: Option<Shape>,
    },

    #[error("image {path:?}: {reason}")]
    ImageFormat { path: PathBuf, reason: String },

    #[error("data: {0}")]
    Data(String),

    #[error("config: {0}")]
    Config(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint tensor `{name}` does not fit the graph: checkpoint {found:?}, graph {expected:?}")]
    TensorMismatch {
        name: String,
        expected: Option<Vec<usize>>,
        found: Option<Vec<usize>>,
    },

    #[error("checkpoint config hash {found:016x} does not match {expected:016x}")]
    ConfigMismatch { expected: u64, found: u64 },

    #[error("training already complete ({epochs} epochs)")]
    AlreadyComplete { epochs: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (noise stream seed {seed:#018x})")]
    NonFiniteLoss { epoch: usize, batch: usize, seed: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by bad numbers rather than bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::NonFiniteLoss { .. })
    }
}
