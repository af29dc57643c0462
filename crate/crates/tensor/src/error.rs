use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{context}: dimension {dim} mismatch, expected {expected} got {got}")]
    DimMismatch {
        context: &'static str,
        dim: usize,
        expected: usize,
        got: usize,
    },

    #[error("{context}: expected rank-{expected} tensor, got shape {got:?}")]
    RankMismatch {
        context: &'static str,
        expected: usize,
        got: Vec<usize>,
    },

    #[error("shape {shape:?} requires {expected} elements, got {got}")]
    ElementCount {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },

    #[error("{context}: invalid argument: {details}")]
    InvalidArgument {
        context: &'static str,
        details: String,
    },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("backward requires a loss connected to gradient-tracked inputs")]
    LossNotOnTape,

    #[error("tape already consumed by a backward pass")]
    TapeConsumed,

    #[error("variable belongs to a different tape")]
    ForeignTape,

    #[error("non-finite value produced by '{node}'")]
    NonFinite { node: String },
}
