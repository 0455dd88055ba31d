use alloc::string::String;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("at least {needed} samples are required, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("requested rank {requested} exceeds the numerical rank {attainable}")]
    RankDeficient { requested: usize, attainable: usize },

    #[error("column {column}: requested rank {requested} exceeds the neighborhood's numerical rank {attainable}")]
    LocalRankDeficient {
        column: usize,
        requested: usize,
        attainable: usize,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("iteration diverged at step {iteration}; retry with a smaller step size")]
    Divergence { iteration: usize },

    #[error("direction {index} vanished after projection onto the cluster subspace")]
    VanishingDirection { index: usize },

    #[error("index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("group {0} has no records")]
    EmptyGroup(usize),

    #[error("log-rank test is undefined without observed events")]
    NoEvents,
}

pub type Result<T> = core::result::Result<T, Error>;
