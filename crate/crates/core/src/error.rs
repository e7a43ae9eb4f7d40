use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid weight {weight} at breakpoint {breakpoint}: weights must be nonnegative and finite")]
    InvalidWeight { breakpoint: f64, weight: f64 },

    #[error("invalid step size {0}: must be nonnegative and finite")]
    InvalidStepsize(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid dimension {got}: need at least {min}")]
    InvalidDimension { got: usize, min: usize },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("divergence detected at iteration {iteration}, node {node}")]
    DivergenceDetected { iteration: usize, node: usize },

    #[error("no data: every Monte-Carlo run diverged")]
    NoData,

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
