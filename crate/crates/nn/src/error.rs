use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("duplicate parameter name '{0}'")]
    DuplicateParam(String),

    #[error("unknown parameter '{0}'")]
    UnknownParam(String),

    #[error("parameter schema mismatch at position {position}: expected '{expected}' {expected_shape:?}, found '{found}' {found_shape:?}")]
    SchemaMismatch {
        position: usize,
        expected: String,
        expected_shape: Vec<usize>,
        found: String,
        found_shape: Vec<usize>,
    },

    #[error("parameter count mismatch: expected {expected}, found {found}")]
    SchemaCount { expected: usize, found: usize },

    #[error("missing gradient for parameter '{0}'")]
    MissingGradient(String),

    #[error("gradient shape for '{name}' is {got:?}, parameter is {expected:?}")]
    GradientShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("checkpoint magic mismatch: expected {expected:?}, got {got:?}")]
    BadMagic { expected: [u8; 4], got: [u8; 4] },

    #[error("unsupported checkpoint version {0}")]
    BadVersion(u8),

    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),

    #[error("checkpoint has trailing bytes after the last block")]
    TrailingData,

    #[error("parameter name is not valid UTF-8")]
    NameEncoding,

    #[error("tensor dimensions overflow the container limits: {0}")]
    DimOverflow(String),

    #[error("optimizer block inconsistent with parameters: {0}")]
    AdamMismatch(String),

    #[error("tensor error: {0}")]
    Tensor(#[from] ct2mr_tensor::TensorError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
