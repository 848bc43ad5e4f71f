//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by fallible operations.
///
/// Shape and tape misuse inside the numerics layer are programming errors and
/// panic instead; everything that depends on runtime data (configs, files,
/// environment actions, training health) goes through this enum.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad key, bad value, violated invariant).
    #[error("config error: {0}")]
    Config(String),

    /// A caller violated an operation's contract (e.g. invalid action id).
    #[error("contract error: {0}")]
    Contract(String),

    /// Lookup of an unknown entity (node id, parameter name).
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Training produced a non-finite quantity.
    #[error("training divergence: {0}")]
    Divergence(String),

    /// A persisted file did not match its expected format.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
