use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },
    #[error("point ({row}, {col}) outside {height}x{width} image")]
    OutOfBounds {
        row: i64,
        col: i64,
        height: usize,
        width: usize,
    },
    #[error("unsupported layer kind {0} for this operation")]
    UnsupportedLayer(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("missing input: {0}")]
    Missing(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::Shape {
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}
