use thiserror::Error;

use crate::classify::Classification;
use crate::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("no branch contains x = {x:?}")]
    NoBranch { x: Vec<f64> },
    #[error("parts {parts:?} all contain x = {x:?}")]
    AmbiguousBranch { x: Vec<f64>, parts: Vec<String> },
    #[error("singular Jacobian ({value:e}) at x = {x:?}")]
    SingularJacobian { x: Vec<f64>, value: f64 },
    #[error("zero output density at y = {y:?}")]
    ZeroDensity { y: Vec<f64> },
    #[error("zero input density at sampled x = {x:?}")]
    ZeroInputDensity { x: Vec<f64> },
    #[error("pdf value {value} exceeds declared bound {bound} at x = {x:?}")]
    BoundViolation { x: Vec<f64>, value: f64, bound: f64 },
    #[error("rejection sampler accepted nothing in {attempts} attempts")]
    SamplingStalled { attempts: u64 },
    #[error("quadrature supports at most 2 dimensions, got {0}")]
    DimensionTooHigh(usize),
    #[error("operation needs a bounded support bounding box")]
    UnboundedSupport,
    #[error("sample x = {x:?} fell in non-bijective part {part}")]
    NonBijectiveSample { x: Vec<f64>, part: String },
    #[error("information loss is infinite ({})", .0.reason.as_str())]
    InfiniteLoss(Box<Classification>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }
}
