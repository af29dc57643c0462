use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("stack magic mismatch: expected \"CTMR\", got {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported stack version {0}")]
    BadVersion(u8),

    #[error("unknown stack dtype code {0}")]
    BadDtype(u8),

    #[error("stack dimensions overflow: {0}")]
    DimOverflow(String),

    #[error("stack truncated while reading {0}")]
    Truncated(&'static str),

    #[error("stack has trailing bytes after the payload")]
    TrailingData,

    #[error("invalid scan record for '{scan}': {details}")]
    InvalidScan { scan: String, details: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("augmentation ranges out of bounds: {0}")]
    AugmentRange(String),

    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("{path}: {source}")]
    IoAt {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("manifest parse error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("tensor error: {0}")]
    Tensor(#[from] ct2mr_tensor::TensorError),
}
