use thiserror::Error;

use crate::jets::JetError;
use crate::metricdef::expr::{EvalError, ParseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("point outside the metric domain: x = {0:?}")]
    OutOfDomain(Vec<f64>),
    #[error("direction y must be nonzero")]
    ZeroDirection,
    #[error("F(x, y) = {0} is not positive")]
    NonPositiveF(f64),
    #[error("fundamental tensor is not positive definite (min eigenvalue {0})")]
    NotPositiveDefinite(f64),
    #[error("fundamental tensor is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("singular matrix")]
    Singular,
    #[error("least-squares system is rank deficient ({rows} x {cols})")]
    RankDeficient { rows: usize, cols: usize },
    #[error("jet order {have} is below the {needed} required for {what}")]
    OrderTooLow {
        needed: usize,
        have: usize,
        what: &'static str,
    },
    #[error("volume density: {0}")]
    Density(String),
    #[error("flag vector is parallel to the flagpole")]
    DegenerateFlag,
    #[error("flag curvature is not scalar at this point (spread {0:e})")]
    NotScalarFlag(f64),
    #[error("unknown tag `{tag}`; valid: {valid}")]
    UnknownTag { tag: String, valid: String },
    #[error("frame index {0} out of range")]
    FrameIndex(usize),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
