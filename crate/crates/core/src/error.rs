use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty removal set")]
    EmptyRemovalSet,
    #[error("mask is empty in every frame")]
    EmptyMask,
    #[error("camera window leaves the source frame at frame {frame}")]
    Containment { frame: usize },
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
