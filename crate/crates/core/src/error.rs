use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The logistic loss has no minimizer on this data (e.g. it is linearly
    /// separable), so gradient descent cannot converge.
    #[error("no minimum: {0}")]
    NoMinimum(String),

    #[error("gradient descent did not converge within {steps} steps (gradient norm {grad_norm:e})")]
    NotConverged { steps: usize, grad_norm: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("undefined reweighting: {0}")]
    UndefinedReweighting(String),

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
