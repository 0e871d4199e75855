use std::path::PathBuf;

/// Errors raised by the analysis pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("refusing to run: {0}")]
    Refused(String),

    #[error("coverage gap at voxel {0:?}")]
    Coverage([usize; 3]),

    #[error("nothing to write: {0}")]
    Empty(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("HDF5 error: {0}")]
    Hdf5(#[from] hdf5::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn consistency(msg: impl Into<String>) -> Self {
        Error::Consistency(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Process exit status for this error class. Usage errors from argument
    /// parsing exit with 2 before any of these are produced.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) => 3,
            Error::Consistency(_) => 4,
            Error::Domain(_) => 5,
            Error::Format { .. } | Error::Hdf5(_) => 6,
            Error::Io { .. } => 7,
            Error::Refused(_) => 8,
            Error::Coverage(_) => 9,
            Error::Empty(_) => 10,
        }
    }
}
