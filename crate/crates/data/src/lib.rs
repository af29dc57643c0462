//! Data layer: synthetic stroke phantoms, the paired-scan data model, the
//! on-disk stack format, subject-level K-fold splitting, and affine
//! augmentation.

mod augment;
mod error;
mod manifest;
mod phantom;
mod split;
mod stack;

pub use augment::{affine_augment, AugmentRanges};
pub use error::DataError;
pub use manifest::{ChannelNorm, Manifest, ScanEntry, ScanRecord, SubjectEntry, CHANNEL_NAMES};
pub use phantom::{make_phantom_corpus, PhantomConfig};
pub use split::{kfold_by_subject, FoldSplit};
pub use stack::{read_stack, write_stack_f32, write_stack_u8, Stack, StackPayload};

pub type Result<T> = std::result::Result<T, DataError>;
