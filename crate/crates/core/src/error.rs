use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("degenerate vector: {0}")]
    DegenerateVector(&'static str),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("record {id} at {timestamp} is older than the rolling window (cutoff {cutoff})")]
    OutOfWindow {
        id: String,
        timestamp: i64,
        cutoff: i64,
    },
    #[error("record {id} at {timestamp} is later than now ({now})")]
    FutureTimestamp { id: String, timestamp: i64, now: i64 },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid judgment: {0}")]
    InvalidJudgment(&'static str),
    #[error("rule error: {0}")]
    Rule(String),
    #[error("embeddings are not retained by this store")]
    MissingEmbeddings,
}

impl Error {
    pub(crate) fn shape(expected: usize, actual: usize) -> Self {
        Error::Shape { expected, actual }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
