use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("io: {0}")]
    Stream(#[from] std::io::Error),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),

    #[error("overlapping entity spans at {first:?} and {second:?}")]
    OverlappingSpans {
        first: (usize, usize),
        second: (usize, usize),
    },

    #[error("invalid entity span {span:?} for sentence of {len} tokens")]
    SpanOutOfBounds { span: (usize, usize), len: usize },

    #[error("position overflow: soft position {position} exceeds table of {capacity} rows")]
    PositionOverflow { position: usize, capacity: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("numeric overflow in layer {layer}")]
    NumericOverflow { layer: usize },

    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss { epoch: usize, step: usize, detail: String },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("length mismatch: {predicted} predicted vs {gold} gold")]
    LengthMismatch { predicted: usize, gold: usize },

    #[error("not a checkpoint file (bad magic)")]
    BadMagic,

    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),

    #[error("checksum mismatch")]
    Checksum,

    #[error("shape mismatch for tensor `{name}`: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("cannot serialize non-finite value in tensor `{0}`")]
    NonFiniteTensor(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
