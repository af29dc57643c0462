use crate::mask::{MaskVolume, Spacing};
use crate::Result;

fn counts(pred: &MaskVolume, gt: &MaskVolume) -> Result<(usize, usize, usize)> {
    pred.same_shape(gt)?;
    let mut p = 0usize;
    let mut g = 0usize;
    let mut i = 0usize;
    for (&pv, &gv) in pred.raw().iter().zip(gt.raw()) {
        p += usize::from(pv);
        g += usize::from(gv);
        i += usize::from(pv && gv);
    }
    Ok((p, g, i))
}

/// Dice overlap 2|P&G| / (|P| + |G|); both-empty masks score 1.
pub fn dice(pred: &MaskVolume, gt: &MaskVolume) -> Result<f64> {
    let (p, g, i) = counts(pred, gt)?;
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * i as f64 / (p + g) as f64)
}

/// |P&G| / |P|; an empty prediction scores 0 against a nonempty truth
/// and 1 when both are empty.
pub fn precision(pred: &MaskVolume, gt: &MaskVolume) -> Result<f64> {
    let (p, g, i) = counts(pred, gt)?;
    if p == 0 {
        return Ok(if g == 0 { 1.0 } else { 0.0 });
    }
    Ok(i as f64 / p as f64)
}

/// |P&G| / |G|; an empty truth scores 0 against a nonempty prediction
/// and 1 when both are empty.
pub fn recall(pred: &MaskVolume, gt: &MaskVolume) -> Result<f64> {
    let (p, g, i) = counts(pred, gt)?;
    if g == 0 {
        return Ok(if p == 0 { 1.0 } else { 0.0 });
    }
    Ok(i as f64 / g as f64)
}

/// Absolute volume difference in milliliters.
pub fn avd_ml(pred: &MaskVolume, gt: &MaskVolume, spacing: Spacing) -> Result<f64> {
    pred.same_shape(gt)?;
    let p = pred.voxel_count() as f64;
    let g = gt.voxel_count() as f64;
    Ok((p - g).abs() * spacing.voxel_volume_mm3() / 1000.0)
}
