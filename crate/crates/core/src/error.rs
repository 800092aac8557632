use std::path::PathBuf;

/// Errors produced by the pruning toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed npy header: {0}")]
    MalformedHeader(String),

    #[error("npy payload has {found} bytes, header requires {expected}")]
    PayloadLength { expected: usize, found: usize },

    #[error("expected a rank-{expected} tensor, found rank {found}")]
    WrongRank { expected: usize, found: usize },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid attention tensor: {0}")]
    InvalidAttention(String),

    #[error("invalid token scores: {0}")]
    InvalidScores(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("requested {k} tokens but the sequence has only {n}")]
    BudgetExceedsTokens { k: usize, n: usize },

    #[error("token budget must be at least 1")]
    ZeroBudget,

    #[error("requested {segments} segments for a sequence of {n} tokens")]
    SegmentsExceedTokens { segments: usize, n: usize },

    #[error("segment count must be at least 1")]
    ZeroSegments,

    #[error("index {index} out of range for {n} tokens")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("duplicate kept index {0}")]
    DuplicateIndex(usize),

    #[error("selection keeps no tokens")]
    EmptySelection,

    #[error("visionzip requires key vectors when contextual tokens are requested")]
    MissingKeys,

    #[error("visionzip requires embeddings")]
    MissingEmbeddings,

    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    #[error("duration must be non-negative, got {0}")]
    NegativeDuration(f64),

    #[error("benchmark needs at least 3 repetitions, got {0}")]
    TooFewReps(usize),

    #[error("allocation failed: {0}")]
    Allocation(String),

    #[error("malformed prune result: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
