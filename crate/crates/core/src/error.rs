use thiserror::Error;

use crate::solver::SolveTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("rank mismatch: model has {model} terms, reference has {reference}")]
    RankMismatch { model: usize, reference: usize },

    #[error("no feasible solution found across {restarts} restart(s); best infeasible residual {residual:.6e}")]
    Infeasible {
        restarts: usize,
        residual: f64,
        trace: Box<SolveTrace>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by malformed or unreadable input files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Parse(_)
        )
    }
}
