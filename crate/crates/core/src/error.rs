use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge at s = {s}: {detail}")]
    Quadrature { s: f64, detail: String },

    #[error("kernel: {0}")]
    Kernel(String),

    #[error("fractional laplacian: {0}")]
    Laplacian(String),

    #[error("linear solver: {0}")]
    Linear(String),

    #[error("newton stagnated after {iterations} iterations (residual {residual:e})")]
    NewtonStagnation { iterations: usize, residual: f64 },

    #[error("nonlinearity: {0}")]
    Nonlinearity(String),

    #[error("extension: {0}")]
    Extension(String),

    #[error("analysis: {0}")]
    Analysis(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
