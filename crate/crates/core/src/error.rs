use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("radius too large for grid: radius {radius} times k_max {k_max} exceeds 700")]
    RadiusTooLarge { radius: f64, k_max: f64 },
    #[error("analyticity radius exhausted at t = {time} (a - lambda*theta = {remaining})")]
    RadiusExhausted { time: f64, remaining: f64 },
    #[error("non-finite values after step at t = {time}; last healthy snapshot index {last_healthy}")]
    Diverged { time: f64, last_healthy: usize },
    #[error("snapshot cadence {cadence} too coarse; budget windows need cadence 1")]
    Cadence { cadence: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
