use thiserror::Error;

pub type Result<T> = std::result::Result<T, WeeError>;

#[derive(Debug, Error)]
pub enum WeeError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("sequence of length {len} exceeds decoder capacity {max_len}")]
    Capacity { len: usize, max_len: usize },

    #[error("closure is not deterministic: {first} != {second}")]
    Determinism { first: f64, second: f64 },

    #[error("training failed: {0}")]
    TrainingFailure(String),

    #[error("non-finite loss at step {step}: {diagnostic}")]
    NonFiniteLoss { step: usize, diagnostic: String },

    #[error("frozen parameter `{0}` changed during training")]
    FrozenDrift(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(WeeError::Shape(msg.into()))
}
