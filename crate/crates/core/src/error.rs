use thiserror::Error;

use crate::chain::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid generator: {0}")]
    InvalidGenerator(ValidationReport),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("marginal generator undefined at t={t}: component {component} state {state} has zero probability")]
    UndefinedTheta {
        component: usize,
        state: usize,
        t: f64,
    },

    #[error("absolute continuity violated at state {state}: p={p:e}, q={q:e}")]
    AbsoluteContinuity { state: String, p: f64, q: f64 },

    #[error("normalization basis is not the tensor-sum of the prescribed marginals: {0}")]
    BaselineMismatch(String),

    #[error("algorithm step {step} infeasible: {reason}")]
    Infeasible { step: usize, reason: String },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
