use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid taper: {0}")]
    InvalidTaper(String),

    #[error("unsupported kernel arity k = {0} (only k = 2 and k = 3 are implemented)")]
    UnsupportedArity(usize),

    #[error("parameter outside its domain: {0}")]
    Domain(String),

    #[error("spectral pole at lambda = {0}")]
    Pole(f64),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("integral diverges: {0}")]
    Divergence(String),

    #[error("problem size {size} exceeds guard {limit}: {what}")]
    Size {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("objective not finite at theta = {0:?}")]
    Objective(Vec<f64>),

    #[error("singular information matrix: {0}")]
    SingularInformation(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("estimator did not converge: {0}")]
    NonConvergence(String),

    #[error("invalid model specification `{spec}`: {reason}")]
    ModelSpec { spec: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
