use thiserror::Error;

/// Failures raised by model construction and the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid economy: {0}")]
    InvalidEconomy(String),

    #[error("virtual value for set size {set_size} is not strictly increasing near type {theta} (step {step:e})")]
    NotRegular { set_size: usize, theta: f64, step: f64 },

    #[error("single crossing fails for set sizes {low} and {high} between types {lower_type} and {upper_type}")]
    SingleCrossing { low: usize, high: usize, lower_type: f64, upper_type: f64 },

    #[error("network effect between set sizes {low} and {high} changes direction at type {theta}")]
    MixedDirection { low: usize, high: usize, theta: f64 },

    #[error("value for set size {set_size} is not strictly increasing near type {theta}")]
    ValueNotIncreasing { set_size: usize, theta: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("type {value} of buyer {buyer} lies outside the support [0, {upper}]")]
    OutOfSupport { buyer: usize, value: f64, upper: f64 },

    #[error("jump localisation did not converge within {steps} bisection steps on [{lo}, {hi}]")]
    NoConvergence { lo: f64, hi: f64, steps: usize },

    #[error("exhaustive enumeration supports at most {max} buyers, got {n}")]
    TooManyBuyers { n: usize, max: usize },

    #[error("economy is trivial ({0}); served bounds are undefined")]
    TrivialEconomy(String),

    #[error("outside the supported regime: {0}")]
    OutsideRegime(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
