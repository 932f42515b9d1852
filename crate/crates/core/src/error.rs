use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("line search failed at iteration {iteration} (f = {value:e})")]
    LineSearch {
        iteration: usize,
        value: f64,
        /// Last accepted iterate.
        x: Vec<f64>,
    },

    #[error("normal equations singular after damping reached {lambda:e}")]
    SingularSystem { lambda: f64 },

    #[error("image {width}x{height} too small for {stages} pooling stages")]
    ImageTooSmall { width: usize, height: usize, stages: usize },

    #[error("{format} format error: {msg}")]
    Format { format: &'static str, msg: String },

    #[error("{format} checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { format: &'static str, stored: u32, computed: u32 },

    #[error("{format} unsupported version {found} (expected {expected})")]
    Version { format: &'static str, found: u32, expected: u32 },

    #[error("degenerate camera: {0}")]
    DegenerateCamera(String),

    #[error("no valid pixels: {0}")]
    EmptyOverlap(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
}

impl Error {
    pub(crate) fn format(format: &'static str, msg: impl Into<String>) -> Self {
        Error::Format { format, msg: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
