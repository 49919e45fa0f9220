use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("agent count {n} outside supported range {min}..={max}")]
    AgentCount { n: usize, min: usize, max: usize },

    #[error("lane index {lane} out of range for {lanes} lanes")]
    LaneIndex { lane: usize, lanes: usize },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("coalitions are not pairwise disjoint or do not fit the agent set")]
    Overlap,

    #[error("partition function has no entry for coalition {coalition} in partition {partition}")]
    MissingEntry { coalition: String, partition: String },

    #[error("imputation is not efficient: sum {sum} vs grand-coalition worth {grand}")]
    Inefficient { sum: f64, grand: f64 },

    #[error("imputation has length {got}, expected {expected}")]
    ImputationLength { got: usize, expected: usize },

    #[error("linear program failed: {0}")]
    Lp(#[from] crate::lp::LpError),

    #[error("too many participants: {got} exceeds cap {cap}")]
    ParticipantOverflow { got: usize, cap: usize },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("writing {path}: {message}")]
    Output { path: String, message: String },

    #[error("epoch at t={time:.3}: {source}")]
    Epoch { time: f64, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;
