use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape mismatch, empty split, bad parameter).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("{kind} file: bad magic {found:?}, expected {expected:?}")]
    BadMagic {
        kind: &'static str,
        found: [u8; 4],
        expected: [u8; 4],
    },

    #[error("{kind} file: unsupported format version {found} (reader supports {supported})")]
    UnsupportedVersion {
        kind: &'static str,
        found: u32,
        supported: u32,
    },

    #[error("{kind} file truncated at byte {offset} while reading {what}")]
    Truncated {
        kind: &'static str,
        offset: usize,
        what: &'static str,
    },

    #[error("{kind} file malformed at byte {offset}: {reason}")]
    Malformed {
        kind: &'static str,
        offset: usize,
        reason: String,
    },

    #[error("CKA undefined: input has zero variance")]
    ZeroVariance,

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
