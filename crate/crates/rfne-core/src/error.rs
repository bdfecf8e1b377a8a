//! Error type shared by every module in the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
///
/// The CLI maps these onto process exit codes: configuration problems,
/// data problems, and numeric failures are distinguishable by variant.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration: bad parameter values, unknown keys, etc.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// Numeric failure: non-finite values, singular matrices, divergence.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Model file is damaged or truncated.
    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    /// Model file was written by an unsupported (newer) format version.
    #[error("unsupported model format version {found} (this build reads up to {supported})")]
    ModelVersion { found: u32, supported: u32 },
}

impl Error {
    /// Convenience constructor for [`Error::Config`].
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Convenience constructor for [`Error::Data`].
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Convenience constructor for [`Error::Numeric`].
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
