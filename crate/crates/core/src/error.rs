use thiserror::Error;

/// Errors surfaced by chart-level numerics.
///
/// Tolerance-driven decisions (rank cutoffs, invariance leakage, level-set
/// membership) report the measured quantity next to the threshold so a caller
/// can tell a genuine failure from a marginal one.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dim(String),

    #[error("subspace is not invariant under the operator (leakage {leakage:.3e} exceeds {tol:.3e})")]
    NotInvariant { leakage: f64, tol: f64 },

    #[error("two-form is degenerate at the evaluation point (|det| = {det:.3e})")]
    Degenerate { det: f64 },

    #[error("level-set projection did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("level set is singular at the point: d\u{03bc} has rank {rank}, expected {expected}")]
    SingularLevel { rank: usize, expected: usize },

    #[error("action is not free at the point: generator span has rank {rank}, expected {expected}")]
    NotFree { rank: usize, expected: usize },

    #[error("point is not on the zero level set (|\u{03bc}| = {0:.3e})")]
    OffLevel(f64),

    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite value encountered during evaluation: {0}")]
    NonFinite(String),

    #[error("rank instability near the sample point: {0}")]
    RankInstability(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
