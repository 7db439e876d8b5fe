use thiserror::Error;

/// Errors produced by the estimators, simulator and pass@k routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid group: a reward group needs at least one reward")]
    EmptyGroup,

    #[error("invalid group: reward {value} at position {index} is not finite")]
    NonFiniteReward { index: usize, value: f64 },

    #[error("empty batch: at least one reward group is required")]
    EmptyBatch,

    #[error("{variant} requires binary rewards in {{0, 1}}")]
    NonBinaryRewards { variant: &'static str },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid pass@k arguments: {0}")]
    PassK(String),

    #[error("query `{query_id}` has n = {n} responses, fewer than k = {k}")]
    TooFewSamples { query_id: String, n: u64, k: u64 },

    #[error("no pass@k records to aggregate")]
    NoRecords,

    #[error("line {line}: {reason}")]
    MalformedLog { line: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
