use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("annotations line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing images: {}", .0.join(", "))]
    MissingImages(Vec<String>),
    #[error("{path}: {msg}")]
    Pgm { path: String, msg: String },
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] m2dl_core::Error),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
