use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("capacity error: dimension {dim} exceeds limit {limit}")]
    Capacity { dim: usize, limit: usize },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("singular system: sigma_max = {sigma_max:.3e}, sigma_min = {sigma_min:.3e}")]
    Singular { sigma_max: f64, sigma_min: f64 },
    #[error("dissipation assumption violated: mu(F1) = {0} >= 0")]
    NotDissipative(f64),
    #[error("nonlinearity ratio too large: R = {0} >= 1")]
    NonlinearityTooLarge(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
