//! Error types shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TgcfError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("missing item metadata for {count} item(s): {sample:?}")]
    MissingMetadata { count: usize, sample: Vec<String> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("internal invariant violation: {0}")]
    Invariant(String),

    #[error("non-finite gradient in parameter `{param}` at index {index}")]
    NonFiniteGradient { param: String, index: usize },

    #[error("training aborted: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, TgcfError>;
