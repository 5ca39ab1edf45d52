use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] effecterase_core::Error),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    External(String),
}

/// Coarse error class; doubles as the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config = 2,
    Data = 3,
    Runtime = 4,
    External = 5,
}

impl ErrorClass {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Runtime => "runtime",
            ErrorClass::External => "external",
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl LabError {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        LabError::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        LabError::Data(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        LabError::Config(msg.into())
    }

    pub fn class(&self) -> ErrorClass {
        use effecterase_core::Error as E;
        match self {
            LabError::Config(_) => ErrorClass::Config,
            LabError::Data(_) => ErrorClass::Data,
            // Missing or unreadable inputs are data problems; anything else is the machine's.
            LabError::Io { source, .. } => match source.kind() {
                io::ErrorKind::NotFound | io::ErrorKind::InvalidData | io::ErrorKind::UnexpectedEof => {
                    ErrorClass::Data
                }
                _ => ErrorClass::Runtime,
            },
            LabError::Core(E::NonFinite(_)) => ErrorClass::Runtime,
            LabError::Core(_) => ErrorClass::Data,
            LabError::Runtime(_) => ErrorClass::Runtime,
            LabError::External(_) => ErrorClass::External,
        }
    }

    /// Single-line JSON for scripts: `{"error":"data","code":3,"message":"..."}`.
    pub fn to_line(&self) -> String {
        let class = self.class();
        serde_json::json!({ "error": class.as_str(), "code": class.code(), "message": self.to_string() }).to_string()
    }
}
