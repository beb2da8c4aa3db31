use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] rfir_core::Error),

    #[error(transparent)]
    Data(#[from] rfir_datagen::Error),

    #[error("record {id}: {source}")]
    Record {
        id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_record(id: usize, e: impl Into<Error>) -> Self {
        Error::Record {
            id,
            source: Box::new(e.into()),
        }
    }
}
