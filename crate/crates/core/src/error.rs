use thiserror::Error;

/// Errors raised by the kernels, simulators and dataset parser.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("hazard ratio {0} outside the accepted range [1e-8, 1e8]")]
    InvalidHazardRatio(f64),
    #[error("significance level {0} must lie strictly between 0 and 1")]
    InvalidAlpha(f64),
    #[error(
        "event in group {group} but no participants of that group are at risk (y1={y1}, y0={y0})"
    )]
    EmptyGroupEvent { group: u8, y1: u64, y0: u64 },
    #[error("invalid event batch: {0}")]
    InvalidBatch(String),
    #[error("o1={o1} outside the support [{min}, {max}]")]
    OutOfSupport { o1: u64, min: u64, max: u64 },
    #[error("logrank variance is zero: every event time has a one-group risk set")]
    DegenerateVariance,
    #[error("two-sided components disagree: {0}")]
    MismatchedComponents(String),
    #[error("invalid boundary specification: {0}")]
    InvalidBoundary(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("unattainable power: {0}")]
    UnattainablePower(String),
    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("undefined quantity: {0}")]
    Undefined(String),
    #[error("posterior degenerate: all grid weights underflowed")]
    DegeneratePosterior,
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("the current batch is already part of the predictive history")]
    PredictiveLeak,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("{0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;
