use thiserror::Error;

/// Errors raised by the solver pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("well-posedness fails: delta = {delta} <= bound {bound}")]
    IllPosed { delta: f64, bound: f64 },

    #[error("callback returned non-finite value {value} at {what} (c = {c}, x = {x})")]
    NonFinite {
        what: &'static str,
        c: f64,
        x: f64,
        value: f64,
    },

    #[error("no sign change of marginal utility bracket [{lo}, {hi}] at x = {x}, zeta = {zeta}")]
    Bracketing { x: f64, zeta: f64, lo: f64, hi: f64 },

    #[error("policy iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    NotConverged { iterations: usize, last_change: f64 },

    #[error("concavity lost at node {node} (x = {x}, d2v = {d2v:e})")]
    ConcavityLost { node: usize, x: f64, d2v: f64 },

    #[error("far-field sensitivity {change:e} exceeds {limit:e} when x_max is doubled")]
    FarField { change: f64, limit: f64 },

    #[error("config line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("dual transform: {0}")]
    Dual(String),

    #[error("dual integration stopped at y = {y}: {reason}")]
    DualIntegration { y: f64, reason: String },

    #[error("region report inconsistent: {0}")]
    Inconsistent(String),

    #[error("x = {x} outside grid [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },

    #[error("inadmissible policy: {0}")]
    Inadmissible(String),

    #[error("wrong utility variant: expected {expected}")]
    WrongVariant { expected: &'static str },
}

pub type Result<T> = std::result::Result<T, Error>;
