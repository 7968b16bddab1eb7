use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("layer {layer} ({kind}): {reason}")]
    Layer {
        layer: usize,
        kind: &'static str,
        reason: String,
    },
    #[error("kernel {kernel:?} does not fit input {input:?}")]
    KernelTooLarge {
        kernel: (usize, usize),
        input: (usize, usize),
    },
    #[error("2x2 pooling needs even spatial dims, got {h}x{w}")]
    OddPool { h: usize, w: usize },
    #[error("input items are {got:?}, network expects {expected:?}")]
    InputShape { expected: [usize; 3], got: [usize; 3] },
    #[error("targets are {got:?}, expected {expected:?}")]
    TargetShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("network has no fully connected layer")]
    NoFeatureLayer,
    #[error("checkpoint line {line}: {msg}")]
    Parse { line: usize, msg: String },
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
