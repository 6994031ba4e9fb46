use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("topic universe must contain at least 2 distinct topics")]
    SingleTopicUniverse,

    #[error("document's true topic {0:?} is not in the topic universe")]
    TopicNotInUniverse(String),

    #[error("split ratios must be positive and sum to 1, got ({0}, {1}, {2})")]
    BadSplitRatios(f64, f64, f64),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("keyword {0:?} does not occur in the document")]
    KeywordNotInDocument(String),

    #[error("{path}:{line}: expected {expected} embedding values, found {found}")]
    EmbeddingDimension {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("propagation matrix requires lambda >= 0, got {0}")]
    NegativeLambda(f64),

    #[error("vertex {0} is isolated and lambda is 0: degree normalization divides by zero")]
    IsolatedVertex(usize),

    #[error("cannot run the model on an empty keyword graph")]
    EmptyGraph,

    #[error("attention over a fully masked query is undefined")]
    FullyMaskedQuery,

    #[error("shape mismatch for {name}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("training aborted: non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("train and dev splits must be nonempty")]
    EmptySplit,

    #[error("predictions and labels must be nonempty and of equal length")]
    BadMetricsInput,

    #[error("bad checkpoint file: {0}")]
    BadCheckpoint(String),

    #[error("bad graph cache file: {0}")]
    BadGraphCache(String),

    #[error("invalid config: {0}")]
    BadConfig(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
