use std::path::PathBuf;

/// Every failure the library can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dataspace is degenerate (zero area)")]
    DegenerateSpace,

    #[error("point ({x}, {y}) lies outside the dataspace")]
    OutOfBounds { x: f64, y: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("duplicate object id {0}")]
    DuplicateId(u64),

    #[error("index file is not an IRF file (bad magic)")]
    BadMagic,

    #[error("unsupported index file version {0}")]
    UnsupportedVersion(u32),

    #[error("index file is corrupt: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
