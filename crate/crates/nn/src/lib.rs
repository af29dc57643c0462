//! Parameter management for the networks: named ordered parameter sets,
//! Normal(0, 0.02) initialization, the Adam optimizer, and a versioned
//! binary checkpoint container that round-trips parameters and optimizer
//! state bitwise.

mod adam;
mod checkpoint;
mod error;
pub mod fdcheck;
mod params;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use error::NnError;
pub use params::{
    collect_grads, load_params, normal_tensor, register_conv, register_conv_transpose,
    uniform_tensor, ParamSet, ParamVars, WEIGHT_STD,
};

pub type Result<T> = std::result::Result<T, NnError>;
