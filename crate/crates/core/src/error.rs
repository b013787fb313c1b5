use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An index, dimension or parameter outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model that violates the structural assumptions (probabilities,
    /// holding times, moments).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A linear solve that could not be completed.
    #[error("numerical error: {message} (condition estimate {condition:e})")]
    Numerical { message: String, condition: f64 },

    /// The rate function does not behave as a SISTr function.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    IterationLimit { iterations: usize, residual: f64 },

    #[error("policy enumeration needs {required} policies, budget is {budget}")]
    Budget { required: f64, budget: f64 },

    #[error("iterates diverged at n = {n}: {detail}")]
    Divergence { n: u64, detail: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Configuration or parameter validation failed; one entry per problem.
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by rejected inputs rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::InvalidModel(_) | Error::Parameter(_) | Error::Input(_))
    }
}
