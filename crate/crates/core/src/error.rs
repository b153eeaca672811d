use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("clustering coefficient undefined for node {node} with degree {degree}")]
    UndefinedClustering { node: usize, degree: usize },

    #[error("no connected pair found among {sampled} sampled pairs")]
    NoConnectedPair { sampled: usize },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("QR iteration did not converge after {iterations} sweeps (unreduced block {lo}..{hi}, residual {residual:e})")]
    EigenNoConvergence {
        iterations: usize,
        lo: usize,
        hi: usize,
        residual: f64,
    },

    #[error("Newton corrector failed after {iterations} iterations (residual {residual:e})")]
    NewtonNoConvergence {
        iterations: usize,
        residual: f64,
        last_u: Vec<f64>,
        last_param: f64,
    },

    #[error("step size underflow: ds = {ds:e} below ds_min = {ds_min:e}")]
    StepUnderflow { ds: f64, ds_min: f64 },

    #[error("non-positive diffusion estimate {value:e} at psi = {psi}")]
    NonPositiveDiffusion { psi: f64, value: f64 },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
