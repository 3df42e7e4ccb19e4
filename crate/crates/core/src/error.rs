use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (empty input, shape mismatch, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("incompatible format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint header mismatch: {0}")]
    Header(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("invalid data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
