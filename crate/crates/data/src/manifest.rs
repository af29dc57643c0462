use std::path::{Path, PathBuf};

use ct2mr_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::stack::read_stack;
use crate::{DataError, Result};

/// Channel order used everywhere: the raw CT plus four perfusion maps,
/// then the DWI target.
pub const CHANNEL_NAMES: [&str; 6] = ["CT", "CBF", "CBV", "MTT", "Tmax", "DWI"];

/// Per-channel affine map applied on load: stored = raw * scale + offset.
/// Phantoms are generated already normalized to [-1, 1], so these are
/// identity by default; they exist so externally converted corpora can
/// declare their normalization in the manifest.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ChannelNorm {
    pub scale: f32,
    pub offset: f32,
}

impl Default for ChannelNorm {
    fn default() -> Self {
        ChannelNorm { scale: 1.0, offset: 0.0 }
    }
}

fn identity_norms() -> Vec<ChannelNorm> {
    vec![ChannelNorm::default(); 6]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanEntry {
    pub ctp: String,
    pub dwi: String,
    pub mask: String,
    pub slices: usize,
}

impl ScanEntry {
    /// Scan identifier derived from the CTP file stem (strips `_ctp`).
    pub fn scan_id(&self) -> String {
        let stem = Path::new(&self.ctp)
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| self.ctp.clone());
        stem.strip_suffix("_ctp").map(str::to_string).unwrap_or(stem)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    pub scans: Vec<ScanEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub spacing_mm: [f32; 3],
    #[serde(default = "identity_norms")]
    pub normalization: Vec<ChannelNorm>,
    pub subjects: Vec<SubjectEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DataError::IoAt {
            path: path.to_path_buf(),
            source: e,
        })?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.normalization.len() != CHANNEL_NAMES.len() {
            return Err(DataError::InvalidScan {
                scan: "manifest".to_string(),
                details: format!(
                    "normalization must list {} channels, found {}",
                    CHANNEL_NAMES.len(),
                    manifest.normalization.len()
                ),
            });
        }
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| DataError::IoAt {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(())
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.id.clone()).collect()
    }

    pub fn n_scans(&self) -> usize {
        self.subjects.iter().map(|s| s.scans.len()).sum()
    }

    /// (subject id, entry) pairs in manifest order.
    pub fn scan_entries(&self) -> impl Iterator<Item = (&str, &ScanEntry)> {
        self.subjects
            .iter()
            .flat_map(|s| s.scans.iter().map(move |e| (s.id.as_str(), e)))
    }

    /// Load and validate one scan; `dir` is the directory holding the
    /// manifest (entry paths are relative to it).
    pub fn load_scan(&self, dir: impl AsRef<Path>, subject_id: &str, entry: &ScanEntry) -> Result<ScanRecord> {
        let dir = dir.as_ref();
        let scan_id = entry.scan_id();
        let fail = |details: String| DataError::InvalidScan {
            scan: scan_id.clone(),
            details,
        };

        let ctp = read_stack(dir.join(&entry.ctp))?.into_tensor()?;
        let dwi = read_stack(dir.join(&entry.dwi))?.into_tensor()?;
        let mask_stack = read_stack(dir.join(&entry.mask))?;
        let mask_dims = mask_stack.dims.clone();
        let mask = mask_stack.into_mask()?;

        let cs = ctp.shape().to_vec();
        if cs.len() != 4 || cs[0] != 5 {
            return Err(fail(format!("CTP stack must be [5,D,S,S], got {cs:?}")));
        }
        let (d, s) = (cs[1], cs[2]);
        if cs[3] != s {
            return Err(fail(format!("CTP slices must be square, got {cs:?}")));
        }
        if dwi.shape() != [1, d, s, s] {
            return Err(fail(format!(
                "DWI stack {:?} does not match CTP geometry [1,{d},{s},{s}]",
                dwi.shape()
            )));
        }
        if mask_dims != [1, d, s, s] {
            return Err(fail(format!(
                "mask stack {mask_dims:?} does not match CTP geometry [1,{d},{s},{s}]"
            )));
        }
        if !(2..=22).contains(&d) {
            return Err(fail(format!("slice count {d} outside [2, 22]")));
        }
        if let Some(bad) = mask.iter().find(|&&v| v > 1) {
            return Err(fail(format!("mask must be strictly binary, found {bad}")));
        }

        let record = ScanRecord {
            subject_id: subject_id.to_string(),
            scan_id,
            ctp: apply_norms(ctp, &self.normalization[..5]),
            dwi: apply_norms(dwi, &self.normalization[5..]),
            mask,
            slices: d,
            size: s,
            spacing_mm: self.spacing_mm,
        };
        record.validate()?;
        Ok(record)
    }

    /// Load every scan of the given subjects, in manifest order.
    pub fn load_subjects(&self, dir: impl AsRef<Path>, ids: &[String]) -> Result<Vec<ScanRecord>> {
        let dir = dir.as_ref();
        let mut out = Vec::new();
        for subject in &self.subjects {
            if !ids.contains(&subject.id) {
                continue;
            }
            for entry in &subject.scans {
                out.push(self.load_scan(dir, &subject.id, entry)?);
            }
        }
        Ok(out)
    }
}

fn apply_norms(mut t: Tensor, norms: &[ChannelNorm]) -> Tensor {
    if norms.iter().all(|n| *n == ChannelNorm::default()) {
        return t;
    }
    let shape = t.shape().to_vec();
    let per_channel = shape[1] * shape[2] * shape[3];
    let data = t.data_mut();
    for (c, n) in norms.iter().enumerate() {
        for v in &mut data[c * per_channel..(c + 1) * per_channel] {
            *v = *v * n.scale + n.offset;
        }
    }
    t
}

/// One subject scan: the 5-channel CTP stack, the ground-truth DWI, the
/// binary lesion mask, and the voxel spacing.
#[derive(Debug, Clone)]
pub struct ScanRecord {
    pub subject_id: String,
    pub scan_id: String,
    /// [5, D, S, S]
    pub ctp: Tensor,
    /// [1, D, S, S]
    pub dwi: Tensor,
    /// [D * S * S], strictly {0, 1}
    pub mask: Vec<u8>,
    pub slices: usize,
    pub size: usize,
    pub spacing_mm: [f32; 3],
}

impl ScanRecord {
    pub fn validate(&self) -> Result<()> {
        let fail = |details: String| DataError::InvalidScan {
            scan: self.scan_id.clone(),
            details,
        };
        let (d, s) = (self.slices, self.size);
        if self.ctp.shape() != [5, d, s, s] {
            return Err(fail(format!("CTP shape {:?}", self.ctp.shape())));
        }
        if self.dwi.shape() != [1, d, s, s] {
            return Err(fail(format!("DWI shape {:?}", self.dwi.shape())));
        }
        if self.mask.len() != d * s * s {
            return Err(fail(format!("mask length {}", self.mask.len())));
        }
        if !(2..=22).contains(&d) {
            return Err(fail(format!("slice count {d} outside [2, 22]")));
        }
        if self.mask.iter().any(|&v| v > 1) {
            return Err(fail("mask not binary".to_string()));
        }
        let bound = 1.0 + 1e-3;
        for (name, t) in [("CTP", &self.ctp), ("DWI", &self.dwi)] {
            if !t.is_finite() {
                return Err(fail(format!("{name} contains non-finite values")));
            }
            if t.data().iter().any(|v| v.abs() > bound) {
                return Err(fail(format!("{name} intensities exceed [-1, 1]")));
            }
        }
        Ok(())
    }

    /// CTP slice z as a [1, 5, S, S] tensor.
    pub fn ctp_slice(&self, z: usize) -> Tensor {
        self.channel_slice(&self.ctp, 5, z)
    }

    /// DWI slice z as a [1, 1, S, S] tensor.
    pub fn dwi_slice(&self, z: usize) -> Tensor {
        self.channel_slice(&self.dwi, 1, z)
    }

    /// Mask slice z as binary bytes of length S*S.
    pub fn mask_slice(&self, z: usize) -> &[u8] {
        let plane = self.size * self.size;
        &self.mask[z * plane..(z + 1) * plane]
    }

    /// Mask slice z as a [1, 1, S, S] float tensor in {0, 1}.
    pub fn mask_slice_f32(&self, z: usize) -> Tensor {
        let data = self.mask_slice(z).iter().map(|&v| v as f32).collect();
        Tensor::new(vec![1, 1, self.size, self.size], data).expect("mask slice shape")
    }

    fn channel_slice(&self, stack: &Tensor, channels: usize, z: usize) -> Tensor {
        let s = self.size;
        let plane = s * s;
        let d = self.slices;
        let mut out = Vec::with_capacity(channels * plane);
        for c in 0..channels {
            let start = (c * d + z) * plane;
            out.extend_from_slice(&stack.data()[start..start + plane]);
        }
        Tensor::new(vec![1, channels, s, s], out).expect("slice shape")
    }

    /// Voxel volume in cubic millimeters.
    pub fn voxel_volume_mm3(&self) -> f32 {
        self.spacing_mm[0] * self.spacing_mm[1] * self.spacing_mm[2]
    }
}
