use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an argument contract.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// Non-finite or otherwise out-of-domain numeric input.
    #[error("domain error: {0}")]
    Domain(String),
    /// A file could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// Numerical rank loss; usually fixable by re-seeding.
    #[error("conditioning error: {0}")]
    Conditioning(String),
    /// A configurable size or memory guard was exceeded.
    #[error("resource guard exceeded: {0}")]
    Resource(String),
    /// Structurally degenerate input (zero columns, empty samples).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
