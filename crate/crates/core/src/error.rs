use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("class {class} has no support examples")]
    EmptyClass { class: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {what}")]
    NonFiniteInput { what: &'static str },

    #[error("episode has no query examples")]
    EmptyQuerySet,

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid episode configuration: {0}")]
    InvalidEpisodeConfig(String),

    #[error("only {eligible} eligible classes, episode needs {needed}")]
    InsufficientClasses { eligible: usize, needed: usize },

    #[error("class {class} holds {available} examples, episode needs {needed}")]
    InsufficientSamples {
        class: usize,
        available: usize,
        needed: usize,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("file length {actual} bytes is inconsistent with header (expected {expected})")]
    TruncatedFile { expected: u64, actual: u64 },

    #[error("class index {index} out of range for {n_classes} classes")]
    ClassIndexOutOfRange { index: u32, n_classes: u32 },

    #[error("invalid class name: {0}")]
    InvalidClassName(String),

    #[error("malformed PGM {path}: {reason}")]
    MalformedPgm { path: PathBuf, reason: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("target size must be nonzero")]
    ZeroTargetSize,

    #[error("class {class} has {size} examples, at least 2 are needed to split")]
    ClassTooSmall { class: usize, size: usize },

    #[error("shape mismatch: parameters have {params} entries, gradients {grads}")]
    ShapeMismatch { params: usize, grads: usize },

    #[error("confusion matrix is empty")]
    EmptyMatrix,

    #[error("invalid training configuration: {0}")]
    InvalidTrainConfig(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
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
