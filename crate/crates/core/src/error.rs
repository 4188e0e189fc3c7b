use thiserror::Error;

/// Errors raised across the design, network and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("full factorial of {product} trials exceeds the cap of {cap}")]
    Size { product: u128, cap: u128 },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown factor `{0}`")]
    UnknownFactor(String),

    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("type error in constraint: {0}")]
    ConstraintType(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {parameter}")]
    NonFinite { parameter: String },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("coordinate {0} outside its domain")]
    Domain(String),

    #[error("at least 2 replicates are required, got {0}")]
    InsufficientReplicates(usize),

    #[error("triangulation failed: {0}")]
    Triangulation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
