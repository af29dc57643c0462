//! Synthetic stroke phantoms: an elliptical brain with smooth texture,
//! one to three irregular lesion blobs, a hyperintense DWI target, and
//! five CT-derived channels with channel-specific lesion contrast. The
//! whole corpus is a pure function of the config.

use std::f32::consts::PI;
use std::path::Path;

use ct2mr_tensor::{rng, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::manifest::{ChannelNorm, Manifest, ScanEntry, SubjectEntry};
use crate::stack::{write_stack_f32, write_stack_u8};
use crate::{DataError, Result};

/// Additive DWI intensity inside the lesion (normalized units).
pub const DWI_LESION_CONTRAST: f32 = 0.8;
/// Additive CT intensity inside the lesion; deliberately weak.
pub const CT_LESION_CONTRAST: f32 = 0.15;
/// Noise level of the CT-derived channels.
pub const SIGMA_CT: f32 = 0.10;
/// Noise level of the MR target.
pub const SIGMA_MR: f32 = 0.03;
/// Lesion contrast of CBF, CBV, MTT, Tmax: flow and volume drop,
/// transit times rise.
pub const PERFUSION_LESION_CONTRAST: [f32; 4] = [-0.45, -0.35, 0.40, 0.50];

const TISSUE_BASE: f32 = -0.05;
const BACKGROUND: f32 = -1.0;

const TAG_ANATOMY: u64 = 0xA1;
const TAG_SCAN: u64 = 0xA2;
const TAG_JITTER: u64 = 0xA3;

#[derive(Debug, Clone)]
pub struct PhantomConfig {
    pub n_subjects: usize,
    pub scans_per_subject: usize,
    pub size: usize,
    /// Inclusive slice-count range, within [2, 22].
    pub slices_range: (usize, usize),
    /// When set, some subjects get one extra scan.
    pub jitter_scans: bool,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            n_subjects: 10,
            scans_per_subject: 1,
            size: 64,
            slices_range: (2, 22),
            jitter_scans: false,
            seed: 7,
        }
    }
}

struct Brain {
    cx: f32,
    cy: f32,
    ax: f32,
    ay: f32,
}

impl Brain {
    fn slice_scale(z: usize, slices: usize) -> f32 {
        0.85 + 0.15 * (PI * (z as f32 + 0.5) / slices as f32).sin()
    }

    fn contains(&self, x: usize, y: usize, scale: f32) -> bool {
        let dx = (x as f32 - self.cx) / (self.ax * scale);
        let dy = (y as f32 - self.cy) / (self.ay * scale);
        dx * dx + dy * dy <= 1.0
    }
}

struct TextureWave {
    amp: f32,
    kx: f32,
    ky: f32,
    kz: f32,
    phase: f32,
}

struct Lesion {
    lx: f32,
    ly: f32,
    lz: f32,
    rx: f32,
    ry: f32,
    rz: f32,
    wob1: f32,
    wob2: f32,
}

impl Lesion {
    fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        let dx = x as f32 - self.lx;
        let dy = y as f32 - self.ly;
        let dz = z as f32 - self.lz;
        let theta = (dy / self.ry).atan2(dx / self.rx);
        let wob = 1.0 + 0.25 * (2.0 * theta + self.wob1).sin() + 0.15 * (3.0 * theta + self.wob2).sin();
        let ex = dx / (self.rx * wob);
        let ey = dy / (self.ry * wob);
        let ez = dz / self.rz;
        ex * ex + ey * ey + ez * ez <= 1.0
    }
}

/// Generate the corpus under `out_dir` and write `manifest.json` there.
pub fn make_phantom_corpus(cfg: &PhantomConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    if cfg.size < 32 {
        return Err(DataError::InvalidScan {
            scan: "phantom".to_string(),
            details: format!("size {} too small, need >= 32", cfg.size),
        });
    }
    let (lo, hi) = cfg.slices_range;
    if lo < 2 || hi > 22 || lo > hi {
        return Err(DataError::InvalidScan {
            scan: "phantom".to_string(),
            details: format!("slices_range ({lo}, {hi}) outside [2, 22]"),
        });
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| DataError::IoAt {
        path: out_dir.to_path_buf(),
        source: e,
    })?;

    let mut subjects = Vec::with_capacity(cfg.n_subjects);
    for si in 0..cfg.n_subjects {
        let sid = format!("s{:03}", si + 1);
        let mut anatomy = rng::stream(rng::derive(cfg.seed, &[TAG_ANATOMY, si as u64]));
        let s = cfg.size as f32;
        let brain = Brain {
            cx: s * anatomy.gen_range(0.46..0.54),
            cy: s * anatomy.gen_range(0.46..0.54),
            ax: s * anatomy.gen_range(0.32..0.40),
            ay: s * anatomy.gen_range(0.36..0.44),
        };
        let n_scans = if cfg.jitter_scans {
            let mut j = rng::stream(rng::derive(cfg.seed, &[TAG_JITTER, si as u64]));
            cfg.scans_per_subject + usize::from(j.gen::<bool>())
        } else {
            cfg.scans_per_subject
        };

        let mut scans = Vec::with_capacity(n_scans);
        for ti in 0..n_scans {
            let scan_id = format!("{sid}_t{ti}");
            let scan_seed = rng::derive(cfg.seed, &[TAG_SCAN, si as u64, ti as u64]);
            let (ctp, dwi, mask, slices) = render_scan(cfg, &brain, scan_seed);

            let ctp_name = format!("{scan_id}_ctp.ctmr");
            let dwi_name = format!("{scan_id}_dwi.ctmr");
            let mask_name = format!("{scan_id}_mask.ctmr");
            write_stack_f32(out_dir.join(&ctp_name), &ctp)?;
            write_stack_f32(out_dir.join(&dwi_name), &dwi)?;
            write_stack_u8(out_dir.join(&mask_name), &[1, slices, cfg.size, cfg.size], &mask)?;
            scans.push(ScanEntry {
                ctp: ctp_name,
                dwi: dwi_name,
                mask: mask_name,
                slices,
            });
        }
        subjects.push(SubjectEntry { id: sid, scans });
    }

    let manifest = Manifest {
        spacing_mm: [1.0, 1.0, 5.0],
        normalization: vec![ChannelNorm::default(); 6],
        subjects,
    };
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn render_scan(
    cfg: &PhantomConfig,
    brain: &Brain,
    scan_seed: u64,
) -> (Tensor, Tensor, Vec<u8>, usize) {
    let mut stream = rng::stream(scan_seed);
    let s = cfg.size;
    let sf = s as f32;
    let (lo, hi) = cfg.slices_range;
    let slices = stream.gen_range(lo..=hi);

    let waves: Vec<TextureWave> = (0..6)
        .map(|_| TextureWave {
            amp: stream.gen_range(0.03..0.08),
            kx: stream.gen_range(0.5..3.0),
            ky: stream.gen_range(0.5..3.0),
            kz: stream.gen_range(0.2..1.5),
            phase: stream.gen_range(0.0..2.0 * PI),
        })
        .collect();

    let n_lesions = stream.gen_range(1..=3usize);
    let lesions: Vec<Lesion> = (0..n_lesions)
        .map(|_| {
            let r_frac = 0.7 * stream.gen_range(0.0f32..1.0).sqrt();
            let theta = stream.gen_range(0.0..2.0 * PI);
            Lesion {
                lx: brain.cx + r_frac * brain.ax * theta.cos(),
                ly: brain.cy + r_frac * brain.ay * theta.sin(),
                lz: stream.gen_range(0.0..slices as f32),
                rx: sf * stream.gen_range(0.07..0.16),
                ry: sf * stream.gen_range(0.07..0.16),
                rz: stream.gen_range(0.8..2.5),
                wob1: stream.gen_range(0.0..2.0 * PI),
                wob2: stream.gen_range(0.0..2.0 * PI),
            }
        })
        .collect();

    let plane = s * s;
    let volume = slices * plane;
    let texture = |x: usize, y: usize, z: usize| -> f32 {
        waves
            .iter()
            .map(|w| {
                w.amp
                    * (2.0 * PI * (w.kx * x as f32 / sf + w.ky * y as f32 / sf + w.kz * z as f32 / 22.0)
                        + w.phase)
                        .cos()
            })
            .sum()
    };

    let mut mask = vec![0u8; volume];
    let mut in_brain = vec![false; volume];
    for z in 0..slices {
        let scale = Brain::slice_scale(z, slices);
        for y in 0..s {
            for x in 0..s {
                let i = (z * s + y) * s + x;
                let inside = brain.contains(x, y, scale);
                in_brain[i] = inside;
                if inside && lesions.iter().any(|l| l.contains(x, y, z)) {
                    mask[i] = 1;
                }
            }
        }
    }

    // DWI target, then the five CT-derived channels. Noise is drawn for
    // every voxel in a fixed order so the stream stays aligned whatever
    // the brain shape.
    let noise_mr = Normal::new(0.0f32, SIGMA_MR).expect("sigma > 0");
    let noise_ct = Normal::new(0.0f32, SIGMA_CT).expect("sigma > 0");

    let mut dwi = vec![BACKGROUND; volume];
    for i in 0..volume {
        let n = noise_mr.sample(&mut stream);
        if in_brain[i] {
            let (z, y, x) = unflatten(i, s);
            let v = TISSUE_BASE + texture(x, y, z) + DWI_LESION_CONTRAST * mask[i] as f32 + n;
            dwi[i] = v.clamp(-1.0, 1.0);
        }
    }

    let mut ctp = vec![BACKGROUND; 5 * volume];
    for (ch, chunk) in ctp.chunks_exact_mut(volume).enumerate() {
        let lesion_gain = match ch {
            0 => CT_LESION_CONTRAST,
            _ => PERFUSION_LESION_CONTRAST[ch - 1],
        };
        let texture_gain = if ch == 0 { 1.0 } else { 0.6 };
        for (i, out) in chunk.iter_mut().enumerate() {
            let n = noise_ct.sample(&mut stream);
            if in_brain[i] {
                let (z, y, x) = unflatten(i, s);
                let v = TISSUE_BASE
                    + texture_gain * texture(x, y, z)
                    + lesion_gain * mask[i] as f32
                    + n;
                *out = v.clamp(-1.0, 1.0);
            }
        }
    }

    debug_assert!(mask.iter().any(|&v| v == 1), "lesion rasterized empty");
    let ctp = Tensor::new(vec![5, slices, s, s], ctp).expect("ctp shape");
    let dwi = Tensor::new(vec![1, slices, s, s], dwi).expect("dwi shape");
    (ctp, dwi, mask, slices)
}

fn unflatten(i: usize, s: usize) -> (usize, usize, usize) {
    let z = i / (s * s);
    let rem = i % (s * s);
    (z, rem / s, rem % s)
}
