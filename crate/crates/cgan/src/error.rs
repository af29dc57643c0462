use thiserror::Error;

#[derive(Debug, Error)]
pub enum CganError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("input shape {got:?} incompatible with {context}")]
    InputShape { context: &'static str, got: Vec<usize> },

    #[error("non-finite loss; first offending tensor: {node}")]
    NonFinite { node: String },

    #[error("tensor error: {0}")]
    Tensor(#[from] ct2mr_tensor::TensorError),

    #[error("parameter error: {0}")]
    Nn(#[from] ct2mr_nn::NnError),
}
