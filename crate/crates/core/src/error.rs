use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension error: {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("backend error{}: {message}", index.map(|i| format!(" at item {i}")).unwrap_or_default())]
    Backend {
        index: Option<usize>,
        message: String,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn backend(msg: impl Into<String>) -> Self {
        Error::Backend {
            index: None,
            message: msg.into(),
        }
    }

    pub(crate) fn dim(what: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            found,
        }
    }

    /// Attaches the index of the failing batch item to a backend error.
    pub fn at_index(self, idx: usize) -> Self {
        match self {
            Error::Backend {
                index: None,
                message,
            } => Error::Backend {
                index: Some(idx),
                message,
            },
            other => other,
        }
    }
}
