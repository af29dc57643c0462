//! Dense f32 tensors with reverse-mode automatic differentiation.
//!
//! The crate is split into a plain value type ([`Tensor`]) that is `Send`
//! and free of any graph bookkeeping, and a single-threaded Wengert tape
//! ([`Tape`]) that records operations on [`Var`] handles and replays them
//! in reverse to produce gradients. Parallelism across independent tapes
//! (e.g. evaluating different scans on different threads) is safe because
//! tapes share nothing.

mod error;
mod kernels;
mod ops;
mod tape;
mod tensor;

pub mod gradcheck;
pub mod rng;

pub use error::TensorError;
pub use kernels::{conv_out_dim, conv_transpose_out_dim};
pub use ops::{Activation, ConvGeometry, ConvTransposeGeometry};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, TensorError>;
