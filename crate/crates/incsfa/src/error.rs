use thiserror::Error;

/// Errors surfaced by this crate.
///
/// `Config` covers bad parameters and malformed configuration files;
/// `Data` covers malformed or inconsistent input streams; `Format` covers
/// model-file problems (bad magic, version, truncation, checksum).
#[derive(Debug, Error)]
pub enum IncSfaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("model format error: {0}")]
    Format(String),

    #[error("untrained model: {0}")]
    Untrained(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, IncSfaError>;
