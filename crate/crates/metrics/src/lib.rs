//! The six evaluation metrics over binary 3D masks with anisotropic
//! spacing — dice, Hausdorff distance, average symmetric surface
//! distance, precision, recall, absolute volume difference — plus
//! mean +- std aggregation and report rendering.
//!
//! Conventions for degenerate masks are explicit: both masks empty gives
//! dice/precision/recall of 1 and distances of 0; exactly one empty mask
//! gives distances equal to the volume's physical diagonal (finite and
//! order-preserving) and precision/recall of 0.

mod distance;
mod mask;
mod overlap;
mod report;

pub use distance::{avg_dist_mm, hausdorff_mm, volume_diagonal_mm};
pub use mask::{MaskVolume, Spacing};
pub use overlap::{avd_ml, dice, precision, recall};
pub use report::{aggregate, render_comparison, render_report, MetricsReport, ScanMetrics};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mask shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 3], [usize; 3]),

    #[error("mask value {0} is not binary")]
    NonBinary(u8),

    #[error("dims {dims:?} require {expected} voxels, got {got}")]
    VoxelCount {
        dims: [usize; 3],
        expected: usize,
        got: usize,
    },

    #[error("metric aggregation requires at least one row")]
    EmptyReport,
}

pub type Result<T> = std::result::Result<T, MetricsError>;
