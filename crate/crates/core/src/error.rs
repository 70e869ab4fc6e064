use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("Bayer images need even dimensions, got {height}x{width}")]
    OddDimensions { height: usize, width: usize },

    #[error("buffer holds {actual} values, expected {expected}")]
    BufferLength { expected: usize, actual: usize },

    #[error("value {value} at index {index} lies outside [0, 1]")]
    OutOfRange { index: usize, value: f32 },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },

    #[error("image {height}x{width} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        height: usize,
        width: usize,
        window: usize,
    },

    #[error("inverse gamma must be positive, got {0}")]
    NonPositiveGamma(f32),

    #[error("white balance gains must be positive, got {0:?}")]
    NonPositiveGains([f32; 3]),

    #[error("JPEG quality must lie in 1..=100, got {0}")]
    JpegQuality(u8),

    #[error("payload must be {expected} bits, got {actual}")]
    PayloadLength { expected: usize, actual: usize },

    #[error("message must be {expected} bits, got {actual}")]
    MessageLength { expected: usize, actual: usize },

    #[error("bit {index} has value {value}; bits must be 0 or 1")]
    NotABit { index: usize, value: u8 },

    #[error("text payload is {0} bytes; at most 7 bytes fit in 56 bits")]
    PayloadTooLong(usize),

    #[error("invalid hex payload {input:?}: {reason}")]
    PayloadHex { input: String, reason: String },

    #[error("unsupported BCH parameters: {0}")]
    CodecParams(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{path}: {property} is {found}, expected {expected}")]
    Format {
        path: PathBuf,
        property: &'static str,
        found: String,
        expected: String,
    },

    #[error("{path}: cannot decode image: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JPEG round trip failed: {0}")]
    Jpeg(String),

    #[error("dataset: {0}")]
    Dataset(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
