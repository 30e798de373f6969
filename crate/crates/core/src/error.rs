use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("unknown primitive kind `{0}`")]
    UnknownPrimitive(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("loss must be scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("tape order violated: node {node} refers to input {input}")]
    TapeOrder { node: usize, input: usize },

    #[error("function is not deterministic: {first} != {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("invalid set batch: {0}")]
    InvalidBatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("code map is not injective: elements {0} and {1} share code {2}")]
    NonInjectiveCode(usize, usize, u32),

    #[error("root iteration did not converge within {0} iterations")]
    RootsDidNotConverge(usize),

    #[error("root has imaginary part {0:e} above tolerance")]
    ComplexRoot(f64),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("candidate pool is empty")]
    EmptyCandidates,

    #[error("covariance is not positive definite (min pivot {0:e})")]
    NotPositiveDefinite(f64),

    #[error("non-finite loss at epoch {epoch}, batch {batch}; parameter norms {param_norms:?}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        param_norms: Vec<f64>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
