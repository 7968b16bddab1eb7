use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] m2dl_core::Error),
    #[error(transparent)]
    Cnn(#[from] m2dl_cnn::Error),
    #[error(transparent)]
    Synth(#[from] m2dl_synth::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{failed} of {total} repeats aborted in group {group}")]
    Aborted { group: String, failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
