use thiserror::Error;

/// Errors produced anywhere in the model pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("root bracket not found after {expansions} expansions (upper end {upper})")]
    NoBracket { expansions: usize, upper: f64 },

    #[error("exponent {exponent} exceeds overflow cap {cap}")]
    Overflow { exponent: f64, cap: f64 },

    #[error("quadrature did not reach tolerance {tolerance:e} (estimated error {estimate:e})")]
    Quadrature { tolerance: f64, estimate: f64 },

    #[error("infeasible moments: {0}")]
    Infeasible(String),

    #[error("infeasible panel layout: {0}")]
    Layout(String),

    #[error("empty panel: {0}")]
    EmptyPanel(String),

    #[error("{failed} of {total} replicates failed; first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("counterfactual step failed (permutation {permutation:?}, step {step}): {source}")]
    Counterfactual {
        permutation: [usize; 4],
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("schema error at row {row}: {message}")]
    Schema { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
