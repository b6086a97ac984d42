use std::path::PathBuf;

/// Errors produced anywhere in the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or buffer dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// A configuration value violates its documented range or an invariant.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke a streaming contract (wrong frame length and similar).
    #[error("contract error: {0}")]
    Contract(String),

    /// Weight file or weight store problems. The message names the tensor when one is involved.
    #[error("weight load error: {0}")]
    Load(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(format!($($arg)*)) };
}

macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(format!($($arg)*)) };
}

pub(crate) use config_err;
pub(crate) use shape_err;
