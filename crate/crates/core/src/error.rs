use thiserror::Error;

/// Errors raised by the cavity toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate population: size-biased draw for spin {spin} exceeded {attempts} attempts")]
    DegeneratePopulation { spin: usize, attempts: usize },

    #[error("degenerate message: BP normalizer vanished after {redraws} redraws")]
    DegenerateMessage { redraws: usize },

    #[error("sample {index} failed: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("enumeration budget exceeded: need {required} states, budget is {budget}")]
    Budget { required: u128, budget: u128 },

    #[error("infeasible truth: {0}")]
    InfeasibleTruth(String),

    #[error("threshold search: {0}")]
    Threshold(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
