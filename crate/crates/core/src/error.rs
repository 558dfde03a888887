use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("population cap of {cap} nodes exceeded at time {time:.4} (pruning disabled or window too wide)")]
    PopulationOverflow { cap: usize, time: f64 },

    #[error("level {v} exceeds the prune-safe range v <= {max_safe} (window {window}, bias bound {bias_bound:.3e})")]
    PruneUnsafe {
        v: f64,
        max_safe: f64,
        window: f64,
        bias_bound: f64,
    },

    #[error("rejection budget of {attempts} attempts exhausted (age {age}, ceiling {ceiling}, empirical acceptance {acceptance:.3e})")]
    RejectionExhausted {
        attempts: u64,
        age: f64,
        ceiling: f64,
        acceptance: f64,
    },

    #[error("decoration at event time {time:.4} failed: {source}")]
    Decoration {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("insufficient tail mass: {count} samples above threshold, need at least {needed}")]
    InsufficientTail { count: usize, needed: usize },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unknown particle id {0}")]
    UnknownParticle(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
