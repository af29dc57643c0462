use crate::{MetricsError, Result};

/// Voxel spacing in millimeters along (x, y, z); the z axis is the slice
/// direction (5 mm at the default scan geometry).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spacing {
    pub x: f32,
    pub y: f32,
    pub z: f32,
}

impl Spacing {
    pub const UNIT: Spacing = Spacing { x: 1.0, y: 1.0, z: 1.0 };

    pub fn new(x: f32, y: f32, z: f32) -> Self {
        Spacing { x, y, z }
    }

    pub fn from_mm(mm: [f32; 3]) -> Self {
        Spacing { x: mm[0], y: mm[1], z: mm[2] }
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.x as f64 * self.y as f64 * self.z as f64
    }

    pub(crate) fn min_step(&self) -> f64 {
        (self.x.min(self.y).min(self.z)) as f64
    }
}

/// Binary 3D mask stored as [D, H, W] (z-major).
#[derive(Debug, Clone)]
pub struct MaskVolume {
    dims: [usize; 3],
    voxels: Vec<bool>,
}

impl MaskVolume {
    pub fn from_bool(dims: [usize; 3], voxels: Vec<bool>) -> Result<Self> {
        let expected = dims[0] * dims[1] * dims[2];
        if voxels.len() != expected {
            return Err(MetricsError::VoxelCount {
                dims,
                expected,
                got: voxels.len(),
            });
        }
        Ok(MaskVolume { dims, voxels })
    }

    /// Build from bytes, rejecting anything outside {0, 1}.
    pub fn from_u8(dims: [usize; 3], data: &[u8]) -> Result<Self> {
        if let Some(&bad) = data.iter().find(|&&v| v > 1) {
            return Err(MetricsError::NonBinary(bad));
        }
        Self::from_bool(dims, data.iter().map(|&v| v == 1).collect())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_count(&self) -> usize {
        self.voxels.iter().filter(|&&v| v).count()
    }

    pub fn is_mask_empty(&self) -> bool {
        !self.voxels.iter().any(|&v| v)
    }

    pub(crate) fn get(&self, z: isize, y: isize, x: isize) -> bool {
        if z < 0 || y < 0 || x < 0 {
            return false;
        }
        let (z, y, x) = (z as usize, y as usize, x as usize);
        let [d, h, w] = self.dims;
        if z >= d || y >= h || x >= w {
            return false;
        }
        self.voxels[(z * h + y) * w + x]
    }

    pub(crate) fn raw(&self) -> &[bool] {
        &self.voxels
    }

    pub(crate) fn same_shape(&self, other: &MaskVolume) -> Result<()> {
        if self.dims != other.dims {
            return Err(MetricsError::ShapeMismatch(self.dims, other.dims));
        }
        Ok(())
    }

    pub(crate) fn iter_set(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [_, h, w] = self.dims;
        self.voxels
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| {
                let z = i / (h * w);
                let rem = i % (h * w);
                [z, rem / w, rem % w]
            })
    }

    /// Boundary voxels in scan order: mask voxels with at least one
    /// 6-connected neighbor that is background or out of volume.
    pub fn boundary(&self) -> Vec<[usize; 3]> {
        self.iter_set()
            .filter(|&[z, y, x]| {
                let (zi, yi, xi) = (z as isize, y as isize, x as isize);
                !(self.get(zi - 1, yi, xi)
                    && self.get(zi + 1, yi, xi)
                    && self.get(zi, yi - 1, xi)
                    && self.get(zi, yi + 1, xi)
                    && self.get(zi, yi, xi - 1)
                    && self.get(zi, yi, xi + 1))
            })
            .collect()
    }
}

/// Squared physical distance between two voxel indices.
pub(crate) fn dist2(a: [usize; 3], b: [usize; 3], sp: Spacing) -> f64 {
    let dz = (a[0] as f64 - b[0] as f64) * sp.z as f64;
    let dy = (a[1] as f64 - b[1] as f64) * sp.y as f64;
    let dx = (a[2] as f64 - b[2] as f64) * sp.x as f64;
    dx * dx + dy * dy + dz * dz
}
