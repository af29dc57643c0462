use ct2mr_tensor::{rng, Tensor};
use rand::Rng;

use crate::{DataError, Result};

/// Symmetric rotation/translation ranges plus a scale interval. The
/// training defaults are rotation +-10 degrees, translation +-10% and
/// scaling [0.9, 1.1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentRanges {
    pub rot_deg: f32,
    pub trans_frac: f32,
    pub scale_lo: f32,
    pub scale_hi: f32,
}

impl Default for AugmentRanges {
    fn default() -> Self {
        AugmentRanges {
            rot_deg: 10.0,
            trans_frac: 0.10,
            scale_lo: 0.9,
            scale_hi: 1.1,
        }
    }
}

impl AugmentRanges {
    pub fn identity() -> Self {
        AugmentRanges {
            rot_deg: 0.0,
            trans_frac: 0.0,
            scale_lo: 1.0,
            scale_hi: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=45.0).contains(&self.rot_deg) {
            return Err(DataError::AugmentRange(format!(
                "|rotation| must be <= 45 degrees, got {}",
                self.rot_deg
            )));
        }
        if !(0.0..=0.5).contains(&self.trans_frac) {
            return Err(DataError::AugmentRange(format!(
                "|translation| must be <= 50%, got {}",
                self.trans_frac
            )));
        }
        if !(0.5..=2.0).contains(&self.scale_lo)
            || !(0.5..=2.0).contains(&self.scale_hi)
            || self.scale_lo > self.scale_hi
        {
            return Err(DataError::AugmentRange(format!(
                "scale must satisfy 0.5 <= lo <= hi <= 2, got [{}, {}]",
                self.scale_lo, self.scale_hi
            )));
        }
        Ok(())
    }
}

/// One affine transform sampled from `ranges` and applied identically to
/// all channels and the mask. Channels resample bilinearly with
/// out-of-field pixels set to -1; the mask resamples nearest-neighbor and
/// stays strictly binary.
pub fn affine_augment(
    channels: &Tensor,
    mask: &[u8],
    ranges: &AugmentRanges,
    seed: u64,
) -> Result<(Tensor, Vec<u8>)> {
    ranges.validate()?;
    let shape = channels.shape().to_vec();
    if shape.len() != 3 {
        return Err(DataError::Tensor(ct2mr_tensor::TensorError::RankMismatch {
            context: "affine_augment channels",
            expected: 3,
            got: shape,
        }));
    }
    let (c, s_h, s_w) = (shape[0], shape[1], shape[2]);
    if s_h != s_w {
        return Err(DataError::AugmentRange(format!(
            "slices must be square, got {s_h}x{s_w}"
        )));
    }
    let s = s_h;
    if mask.len() != s * s {
        return Err(DataError::AugmentRange(format!(
            "mask length {} does not match {s}x{s}",
            mask.len()
        )));
    }

    let mut stream = rng::stream(seed);
    let theta = stream
        .gen_range(-ranges.rot_deg..=ranges.rot_deg)
        .to_radians();
    let tx = stream.gen_range(-ranges.trans_frac..=ranges.trans_frac) * s as f32;
    let ty = stream.gen_range(-ranges.trans_frac..=ranges.trans_frac) * s as f32;
    let scale = stream.gen_range(ranges.scale_lo..=ranges.scale_hi);

    let center = (s as f32 - 1.0) / 2.0;
    let (sin, cos) = theta.sin_cos();

    // Inverse map: forward is p' = scale * R(theta) * (p - c) + c + t.
    let src_of = |x: usize, y: usize| -> (f32, f32) {
        let dx = x as f32 - center - tx;
        let dy = y as f32 - center - ty;
        let sx = (cos * dx + sin * dy) / scale + center;
        let sy = (-sin * dx + cos * dy) / scale + center;
        (sx, sy)
    };

    let mut out = vec![0.0f32; c * s * s];
    for ci in 0..c {
        let src = &channels.data()[ci * s * s..(ci + 1) * s * s];
        let dst = &mut out[ci * s * s..(ci + 1) * s * s];
        for y in 0..s {
            for x in 0..s {
                let (sx, sy) = src_of(x, y);
                dst[y * s + x] = bilinear_border(src, s, sx, sy, -1.0);
            }
        }
    }

    let mut mask_out = vec![0u8; s * s];
    for y in 0..s {
        for x in 0..s {
            let (sx, sy) = src_of(x, y);
            let ix = sx.round() as isize;
            let iy = sy.round() as isize;
            mask_out[y * s + x] = if ix >= 0 && iy >= 0 && (ix as usize) < s && (iy as usize) < s {
                mask[iy as usize * s + ix as usize]
            } else {
                0
            };
        }
    }

    Ok((Tensor::new(vec![c, s, s], out)?, mask_out))
}

fn bilinear_border(src: &[f32], s: usize, x: f32, y: f32, fill: f32) -> f32 {
    let x0 = x.floor();
    let y0 = y.floor();
    let tx = x - x0;
    let ty = y - y0;
    let at = |ix: isize, iy: isize| -> f32 {
        if ix >= 0 && iy >= 0 && (ix as usize) < s && (iy as usize) < s {
            src[iy as usize * s + ix as usize]
        } else {
            fill
        }
    };
    let (x0, y0) = (x0 as isize, y0 as isize);
    let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
    let bot = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
    top * (1.0 - ty) + bot * ty
}
