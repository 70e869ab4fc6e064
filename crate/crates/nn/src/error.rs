use std::path::PathBuf;

use rawmark_core::codec::CodecParams;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] rawmark_core::Error),

    #[error("torch: {0}")]
    Torch(#[from] tch::TchError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: unknown key `{0}`")]
    UnknownKey(String),

    #[error("config: `{key}`: {reason}")]
    ConfigValue { key: String, reason: String },

    #[error("{path}: not a model bundle ({reason})")]
    BundleFormat { path: PathBuf, reason: String },

    #[error("{path}: checksum mismatch, the bundle is truncated or corrupt")]
    Checksum { path: PathBuf },

    #[error("{path}: bundle schema `{found}` is not supported (expected `{expected}`)")]
    Schema {
        path: PathBuf,
        found: String,
        expected: &'static str,
    },

    #[error("bundle codec {bundle:?} is incompatible with {expected:?}")]
    CodecMismatch {
        bundle: CodecParams,
        expected: CodecParams,
    },

    #[error("shape: {0}")]
    Shape(String),

    #[error("distortion: {0}")]
    Distortion(String),

    #[error("training: {0}")]
    Training(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad operator input rather than the environment.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { .. } => false,
            Error::Core(e) => !matches!(e, rawmark_core::Error::Io { .. }),
            _ => true,
        }
    }
}
