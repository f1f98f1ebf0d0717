use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("time {t} is outside the trajectory range [0, {end}]")]
    OutOfRange { t: f64, end: f64 },

    #[error("target is unreachable: {distance:.6} m outside the leg workspace")]
    Unreachable { distance: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("constraint policy error: {0}")]
    Policy(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("force oracle error: {0}")]
    Oracle(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    #[error("climbable sampler starved: accepted {accepted} of {draws} draws")]
    SamplerStarvation { accepted: usize, draws: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
