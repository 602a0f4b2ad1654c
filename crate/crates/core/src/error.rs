use std::path::PathBuf;

/// Errors raised by the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate channel: column {column} has zero norm")]
    DegenerateChannel { column: usize },

    #[error("Gram matrix is singular or ill-conditioned (condition number {condition:.3e}, limit {limit:.3e})")]
    Singular { condition: f64, limit: f64 },

    #[error("unsupported bit depth: {0} planes (only 8 supported)")]
    UnsupportedBitDepth(usize),

    #[error("external command `{command}` failed: {reason}")]
    ExternalCommand { command: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
