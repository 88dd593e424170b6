use thiserror::Error;

/// Errors produced by any layer of the solver.
#[derive(Debug, Error)]
pub enum Error {
    /// Problem-file syntax error with a 1-based source position.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A stochasticity or range invariant failed after parsing.
    #[error("validation error: {0}")]
    Validation(String),

    /// Belief update conditioned on an observation that has probability zero.
    #[error("observation {observation} has zero probability under action {action}")]
    ZeroProbabilityObservation { action: usize, observation: usize },

    /// The simplex solver exceeded its pivot budget without reaching an answer.
    #[error("numerical failure: no progress after {pivots} simplex pivots")]
    NumericalFailure { pivots: usize },

    /// An operation that needs at least one vector was given none.
    #[error("empty vector set")]
    EmptySet,

    /// A materialized cross-sum grew past the configured cap.
    #[error("cross-sum of {size} vectors exceeds the cap of {cap}")]
    CombinatorialBlowup { size: usize, cap: usize },

    /// A restricted dominance check needs cross-sum parent bookkeeping
    /// that the candidate vector does not carry.
    #[error("restricted dominance check requires cross-sum provenance, none recorded")]
    ProvenanceMissing,

    /// A residual stopping target was requested for an undiscounted model.
    #[error("residual stopping requires discount < 1 (got {discount})")]
    NonConvergent { discount: f64 },

    /// A run was cut off by a deadline.
    #[error("timed out")]
    TimedOut,

    #[error("alpha file error: {0}")]
    AlphaFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
