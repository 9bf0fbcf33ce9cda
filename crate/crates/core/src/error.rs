use thiserror::Error;

use crate::reduction::AssumptionReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rank deficient {what}: numerical rank {rank}, expected {expected}")]
    RankDeficient {
        what: &'static str,
        rank: usize,
        expected: usize,
    },

    #[error("dimension order violated (need m >= d_x >= d_y and every hidden width >= d_y): {0}")]
    DimensionOrder(String),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("random draw violates the data assumptions: {0:?}")]
    AssumptionViolation(Box<AssumptionReport>),

    #[error("layer index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix {index} of the group element is not orthogonal (deviation {deviation:e})")]
    NotOrthogonal { index: usize, deviation: f64 },

    #[error("scalars of the group element must multiply to 1, got {0}")]
    ProductNotOne(f64),

    #[error("adaptive step underflow at t = {t}: h = {h:e}")]
    StepUnderflow { t: f64, h: f64 },

    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("trajectory has {0} snapshots, at least 1 is needed")]
    TooFewSnapshots(usize),

    #[error("insufficient decay above the terminal loss: {0}")]
    InsufficientDecay(String),

    #[error("point is not critical: gradient norm {grad_norm:e} exceeds {threshold:e}")]
    NotCritical { grad_norm: f64, threshold: f64 },

    #[error("loss {loss} matches critical values {first} and {second} within tolerance")]
    AmbiguousMatch { loss: f64, first: f64, second: f64 },

    #[error("fitted subset of size {size} must be smaller than d_y = {d_y}")]
    SubsetTooLarge { size: usize, d_y: usize },

    #[error("could not draw a well-conditioned block after {0} attempts")]
    BadConditioning(usize),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("state dimension {n} exceeds the dense Hessian limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("not a constructed single-hidden-layer saddle: {0}")]
    NotConstructedSaddle(String),

    #[error("terminal is not a global minimum (loss {loss:e})")]
    NotGlobalMinimum { loss: f64 },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

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
    /// True for errors caused by invalid input or violated modelling
    /// assumptions, as opposed to numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::DimensionOrder(_)
                | Error::DegenerateSpectrum(_)
                | Error::AssumptionViolation(_)
                | Error::IndexOutOfRange(_)
                | Error::ShapeMismatch(_)
                | Error::NotOrthogonal { .. }
                | Error::ProductNotOne(_)
                | Error::SubsetTooLarge { .. }
                | Error::OutOfRange(_)
                | Error::TooLarge { .. }
                | Error::NotConstructedSaddle(_)
                | Error::ConfigInvalid(_)
                | Error::Parse(_)
        )
    }
}
