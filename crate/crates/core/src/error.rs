use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the denoising library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("frame {index} ({}): {source}", path.display())]
    FrameIo {
        index: usize,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed or inconsistent file content.
    #[error("format error: {0}")]
    Format(String),

    /// Invalid parameters or profile values.
    #[error("configuration error: {0}")]
    Config(String),

    /// Arguments that violate an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for errors caused by the filesystem or by file contents.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::FrameIo { .. } | Error::Format(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
