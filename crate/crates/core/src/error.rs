use thiserror::Error;

/// Errors produced by the architecture model and the numerical engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },

    #[error("malformed document at {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("unknown builder `{0}`")]
    UnknownBuilder(String),

    #[error("gate index {index} out of range for a period of {len} gates")]
    GateIndex { index: usize, len: usize },

    #[error("gap undefined: uncovered site {site}")]
    Uncovered { site: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("iterative solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("memory budget exceeded: {required} bytes required, budget is {budget} bytes")]
    Budget { required: u64, budget: u64 },

    #[error("size guard exceeded: {what}")]
    TooLarge { what: String },

    #[error("no crossover at this N: lambda {lam} <= lambda' {lam_prime}")]
    NoCrossover { lam: f64, lam_prime: f64 },

    #[error("bisection failed to bracket the threshold in [{lo}, {hi}]")]
    Bisection { lo: f64, hi: f64 },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("invalid parameter: {0}")]
    Param(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Invalid { path: path.into(), msg: msg.into() }
    }
}
