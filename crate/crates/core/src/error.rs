use thiserror::Error;

/// Errors produced by model validation, the solvers and the experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("kernel row (s={state}, a={action}) is not a probability vector (sum {sum})")]
    RowNotStochastic { state: usize, action: usize, sum: f64 },

    #[error("reward r(s={state}, a={action}) = {value} lies outside [0, 1]")]
    RewardOutOfRange { state: usize, action: usize, value: f64 },

    #[error("discount {0} must lie in [0, 1)")]
    BadDiscount(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("policy row for state {state} is not a probability vector")]
    PolicyRowInvalid { state: usize },

    #[error("value entry {index} is negative ({value})")]
    NegativeValueEntry { index: usize, value: f64 },

    #[error("invalid uncertainty radius {radius} for {divergence}")]
    InvalidRadius { divergence: &'static str, radius: f64 },

    #[error("invalid tolerance {0}")]
    InvalidTolerance(f64),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("pair (s={state}, a={action}) has no recorded visits")]
    ZeroVisit { state: usize, action: usize },

    #[error("inconsistent counts: {0}")]
    InvalidCounts(String),

    #[error("invalid behavior distribution: {0}")]
    InvalidBehavior(String),

    #[error("invalid instance parameters: {0}")]
    InvalidParams(String),

    #[error("x = {x} lies outside the domain [{lower}, 1) of f_sigma")]
    DomainError { x: f64, lower: f64 },

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error("insufficient data for slope fit: {0}")]
    InsufficientData(String),

    #[error("trial (instance {instance}, sigma {sigma}, n {n}, trial {trial}) failed: {source}")]
    Trial {
        instance: String,
        sigma: f64,
        n: u64,
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(String),

    #[error("json: {0}")]
    Json(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
