//! Error type shared across the pipeline.
//!
//! The variants map one-to-one onto the CLI exit codes: `Usage` -> 2,
//! `Parse`/`Format`/`Config`/`Io` -> 3, `Numerical` -> 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input that failed structural parsing (bad header, truncated
    /// body, invalid JSON).
    #[error("parse error: {0}")]
    Parse(String),

    /// Structurally valid input in an unsupported format (wrong PLY flavor,
    /// version mismatch, 16-bit PNG).
    #[error("format error: {0}")]
    Format(String),

    /// Invalid configuration or an operation applied to data that cannot
    /// support it.
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite values or singular matrices where finite ones are required.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Command-line level misuse (mismatched file sets, unknown export
    /// format).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
