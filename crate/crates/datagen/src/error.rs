use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("bad image {path}: {msg}")]
    Image { path: String, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    #[error(transparent)]
    Core(#[from] rfir_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
