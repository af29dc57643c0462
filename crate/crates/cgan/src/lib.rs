//! CT-to-MR conditional GAN: a ResNet-block generator that maps 5-channel
//! CT-perfusion slices to single-channel derived MR, a 70x70 PatchGAN
//! discriminator over the 6-channel (CTP, MR) stack, the adversarial and
//! L1 loss terms, and the alternating per-batch training step.

mod discriminator;
mod error;
mod generator;
mod losses;
mod train;

pub mod check;

pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use error::CganError;
pub use generator::{DropoutMode, Generator, GeneratorConfig};
pub use losses::{d_loss, g_adv_loss, g_total_loss, l1_loss};
pub use train::{d_step, g_step, generate_fake, train_step, StepLosses};

pub type Result<T> = std::result::Result<T, CganError>;
