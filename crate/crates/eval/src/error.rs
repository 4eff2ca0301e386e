use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    /// The judge answered but no rating could be read from its reply.
    #[error("scoring error: no [[1-5]] rating in judge reply: {raw:?}")]
    Scoring { raw: String },
    #[error("completeness error: {0}")]
    Completeness(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;
