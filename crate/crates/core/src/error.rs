use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NptiError>;

#[derive(Debug, Error)]
pub enum NptiError {
    /// A model or component configuration violates one of its bounds.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller-supplied data (tokens, corpus lines, ids) is unusable.
    #[error("input error: {0}")]
    Input(String),

    /// A persisted artifact (weight file, report, map) is malformed.
    #[error("format error: {0}")]
    Format(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// Two artifacts that must agree (corpus lines, profiles, maps) do not.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// A required entry is absent (aspect, a95 value, ...).
    #[error("completeness error: {0}")]
    Completeness(String),

    /// A steering spec references neurons the model does not have.
    #[error("spec/model mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NptiError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Self::Input(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Self::Format(msg.into())
    }
}
