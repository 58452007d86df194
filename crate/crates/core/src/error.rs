use thiserror::Error;

/// Errors raised by the library operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },
    #[error("unknown map `{0}`")]
    UnknownMap(String),
    #[error("certified profile requested but the map has no analytic mu bound")]
    MissingBound,
    #[error("radius {r} outside profile range (0, {r_max}]")]
    OutOfRange { r: f64, r_max: f64 },
    #[error("path needs at least two recorded points")]
    TooFewPoints,
    #[error("certificate radius is zero")]
    ZeroRadius,
    #[error("strategy {strategy} not applicable to a map {n} -> {m}")]
    StrategyMismatch {
        strategy: &'static str,
        n: usize,
        m: usize,
    },
    #[error("no sample hit the sublevel set at level {level}")]
    EmptySublevel { level: f64 },
    #[error("the first loop segment could not be lifted")]
    LoopNotInImage,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn non_finite(context: &str) -> Error {
    Error::NonFinite {
        context: context.to_string(),
    }
}
