use thiserror::Error;

/// Errors raised by the library. Each variant maps onto one CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range input (bad config, unknown symbol, k > N, ...).
    #[error("{module}: invalid input: {message}")]
    Input { module: &'static str, message: String },

    /// A mathematical precondition of the requested computation does not hold.
    #[error("{module}: precondition failed: {message}")]
    Precondition { module: &'static str, message: String },

    /// The request is well-formed but exceeds what this implementation can do
    /// (integer overflow, enumeration budget, subset-enumeration guard).
    #[error("{module}: capability exceeded: {message}")]
    Capability { module: &'static str, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn input(module: &'static str, message: impl Into<String>) -> Self {
        Error::Input { module, message: message.into() }
    }

    pub(crate) fn precondition(module: &'static str, message: impl Into<String>) -> Self {
        Error::Precondition { module, message: message.into() }
    }

    pub(crate) fn capability(module: &'static str, message: impl Into<String>) -> Self {
        Error::Capability { module, message: message.into() }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for this error: 3 for capability errors, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Capability { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
