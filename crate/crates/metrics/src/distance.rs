//! Boundary-distance metrics. Nearest-neighbor queries run over a dense
//! boundary grid with an expanding Chebyshev-ring search: a ring at index
//! radius r can hold nothing closer than r times the smallest spacing, so
//! the search stops as soon as the current best beats that bound. This is
//! exact and independent of the all-pairs oracle used by the tests.

use crate::mask::{dist2, MaskVolume, Spacing};
use crate::Result;

/// Physical diagonal of the whole volume; the defined worst case when
/// exactly one mask is empty.
pub fn volume_diagonal_mm(dims: [usize; 3], spacing: Spacing) -> f64 {
    let dz = dims[0] as f64 * spacing.z as f64;
    let dy = dims[1] as f64 * spacing.y as f64;
    let dx = dims[2] as f64 * spacing.x as f64;
    (dx * dx + dy * dy + dz * dz).sqrt()
}

struct BoundaryGrid {
    dims: [usize; 3],
    cells: Vec<bool>,
    points: Vec<[usize; 3]>,
}

impl BoundaryGrid {
    fn new(mask: &MaskVolume) -> Self {
        let dims = mask.dims();
        let points = mask.boundary();
        let mut cells = vec![false; dims[0] * dims[1] * dims[2]];
        for &[z, y, x] in &points {
            cells[(z * dims[1] + y) * dims[2] + x] = true;
        }
        BoundaryGrid { dims, cells, points }
    }

    fn has(&self, z: isize, y: isize, x: isize) -> bool {
        if z < 0 || y < 0 || x < 0 {
            return false;
        }
        let (z, y, x) = (z as usize, y as usize, x as usize);
        let [d, h, w] = self.dims;
        z < d && y < h && x < w && self.cells[(z * h + y) * w + x]
    }

    /// Exact nearest boundary distance from `q` in physical units.
    fn nearest(&self, q: [usize; 3], spacing: Spacing) -> f64 {
        let [d, h, w] = self.dims;
        let max_ring = d.max(h).max(w);
        let (qz, qy, qx) = (q[0] as isize, q[1] as isize, q[2] as isize);
        let mut best = f64::INFINITY;
        for r in 0..=max_ring {
            if best.sqrt() <= (r as f64) * spacing.min_step() {
                break;
            }
            let ri = r as isize;
            let mut visit = |z: isize, y: isize, x: isize| {
                if self.has(z, y, x) {
                    let p = [z as usize, y as usize, x as usize];
                    let d2 = dist2(q, p, spacing);
                    if d2 < best {
                        best = d2;
                    }
                }
            };
            if r == 0 {
                visit(qz, qy, qx);
                continue;
            }
            // the six faces of the Chebyshev shell at radius r
            for z in [qz - ri, qz + ri] {
                for y in (qy - ri)..=(qy + ri) {
                    for x in (qx - ri)..=(qx + ri) {
                        visit(z, y, x);
                    }
                }
            }
            for y in [qy - ri, qy + ri] {
                for z in (qz - ri + 1)..=(qz + ri - 1) {
                    for x in (qx - ri)..=(qx + ri) {
                        visit(z, y, x);
                    }
                }
            }
            for x in [qx - ri, qx + ri] {
                for z in (qz - ri + 1)..=(qz + ri - 1) {
                    for y in (qy - ri + 1)..=(qy + ri - 1) {
                        visit(z, y, x);
                    }
                }
            }
        }
        best.sqrt()
    }
}

/// Directed (max, mean) boundary distances from `from` to `to`, iterating
/// boundary voxels in scan order.
fn directed(from: &BoundaryGrid, to: &BoundaryGrid, spacing: Spacing) -> (f64, f64) {
    let mut max = 0.0f64;
    let mut sum = 0.0f64;
    for &p in &from.points {
        let d = to.nearest(p, spacing);
        if d > max {
            max = d;
        }
        sum += d;
    }
    (max, sum / from.points.len() as f64)
}

fn empty_case(pred: &MaskVolume, gt: &MaskVolume, spacing: Spacing) -> Option<f64> {
    match (pred.is_mask_empty(), gt.is_mask_empty()) {
        (true, true) => Some(0.0),
        (true, false) | (false, true) => Some(volume_diagonal_mm(pred.dims(), spacing)),
        (false, false) => None,
    }
}

/// Symmetric Hausdorff distance between boundary point sets, in mm.
pub fn hausdorff_mm(pred: &MaskVolume, gt: &MaskVolume, spacing: Spacing) -> Result<f64> {
    pred.same_shape(gt)?;
    if let Some(v) = empty_case(pred, gt, spacing) {
        return Ok(v);
    }
    let pg = BoundaryGrid::new(pred);
    let gg = BoundaryGrid::new(gt);
    let (max_pg, _) = directed(&pg, &gg, spacing);
    let (max_gp, _) = directed(&gg, &pg, spacing);
    Ok(max_pg.max(max_gp))
}

/// Average symmetric surface distance: the mean of the two directed mean
/// boundary distances, in mm.
pub fn avg_dist_mm(pred: &MaskVolume, gt: &MaskVolume, spacing: Spacing) -> Result<f64> {
    pred.same_shape(gt)?;
    if let Some(v) = empty_case(pred, gt, spacing) {
        return Ok(v);
    }
    let pg = BoundaryGrid::new(pred);
    let gg = BoundaryGrid::new(gt);
    let (_, mean_pg) = directed(&pg, &gg, spacing);
    let (_, mean_gp) = directed(&gg, &pg, spacing);
    Ok((mean_pg + mean_gp) / 2.0)
}
