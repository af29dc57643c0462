//! Exhaustive brute-force oracles for the metric suite: all-pairs
//! boundary distances and direct voxel counting, on randomized masks in
//! small volumes. The oracle keeps its own copy of each voxel buffer and
//! never calls into the library's geometry code.

use ct2mr_metrics::{
    avd_ml, avg_dist_mm, dice, hausdorff_mm, precision, recall, volume_diagonal_mm, MaskVolume,
    Spacing,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIMS: [usize; 3] = [4, 8, 8]; // (D, H, W) — within an 8x8x4 volume
const SPACING: Spacing = Spacing { x: 1.0, y: 1.0, z: 5.0 };

struct OracleMask {
    voxels: Vec<bool>,
}

impl OracleMask {
    fn random(rng: &mut ChaCha8Rng, fill: f64) -> Self {
        let n = DIMS[0] * DIMS[1] * DIMS[2];
        OracleMask {
            voxels: (0..n).map(|_| rng.gen_bool(fill)).collect(),
        }
    }

    fn to_volume(&self) -> MaskVolume {
        MaskVolume::from_bool(DIMS, self.voxels.clone()).unwrap()
    }

    fn get(&self, z: i64, y: i64, x: i64) -> bool {
        let [d, h, w] = DIMS;
        if z < 0 || y < 0 || x < 0 || z >= d as i64 || y >= h as i64 || x >= w as i64 {
            return false;
        }
        self.voxels[((z as usize) * h + y as usize) * w + x as usize]
    }

    fn count(&self) -> usize {
        self.voxels.iter().filter(|&&v| v).count()
    }

    fn intersection(&self, other: &OracleMask) -> usize {
        self.voxels
            .iter()
            .zip(&other.voxels)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    /// Mask voxels with a 6-connected background or out-of-volume
    /// neighbor, in scan order.
    fn boundary(&self) -> Vec<[i64; 3]> {
        let [d, h, w] = DIMS;
        let mut out = Vec::new();
        for z in 0..d as i64 {
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    if !self.get(z, y, x) {
                        continue;
                    }
                    let solid = self.get(z - 1, y, x)
                        && self.get(z + 1, y, x)
                        && self.get(z, y - 1, x)
                        && self.get(z, y + 1, x)
                        && self.get(z, y, x - 1)
                        && self.get(z, y, x + 1);
                    if !solid {
                        out.push([z, y, x]);
                    }
                }
            }
        }
        out
    }
}

fn d2(a: [i64; 3], b: [i64; 3]) -> f64 {
    let dz = (a[0] as f64 - b[0] as f64) * SPACING.z as f64;
    let dy = (a[1] as f64 - b[1] as f64) * SPACING.y as f64;
    let dx = (a[2] as f64 - b[2] as f64) * SPACING.x as f64;
    dx * dx + dy * dy + dz * dz
}

/// All-pairs directed (max, mean) distances.
fn oracle_directed(from: &[[i64; 3]], to: &[[i64; 3]]) -> (f64, f64) {
    let mut max = 0.0f64;
    let mut sum = 0.0f64;
    for &p in from {
        let mut best = f64::INFINITY;
        for &q in to {
            let d = d2(p, q);
            if d < best {
                best = d;
            }
        }
        let d = best.sqrt();
        if d > max {
            max = d;
        }
        sum += d;
    }
    (max, sum / from.len() as f64)
}

#[test]
fn thousand_random_masks_match_bruteforce_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..1000 {
        // vary density, including frequently-empty masks
        let fill_p = [0.0, 0.01, 0.05, 0.2, 0.5][case % 5];
        let fill_g = [0.3, 0.0, 0.1, 0.05, 0.5][(case / 5) % 5];
        let p = OracleMask::random(&mut rng, fill_p);
        let g = OracleMask::random(&mut rng, fill_g);
        let pv = p.to_volume();
        let gv = g.to_volume();

        // overlap ratios within 1e-9
        let (pc, gc, ic) = (p.count(), g.count(), p.intersection(&g));
        let dice_oracle = if pc + gc == 0 { 1.0 } else { 2.0 * ic as f64 / (pc + gc) as f64 };
        let prec_oracle = if pc == 0 {
            if gc == 0 { 1.0 } else { 0.0 }
        } else {
            ic as f64 / pc as f64
        };
        let rec_oracle = if gc == 0 {
            if pc == 0 { 1.0 } else { 0.0 }
        } else {
            ic as f64 / gc as f64
        };
        assert!((dice(&pv, &gv).unwrap() - dice_oracle).abs() < 1e-9, "case {case}");
        assert!((precision(&pv, &gv).unwrap() - prec_oracle).abs() < 1e-9, "case {case}");
        assert!((recall(&pv, &gv).unwrap() - rec_oracle).abs() < 1e-9, "case {case}");

        // counting metric is exact
        let avd_oracle =
            (pc as f64 - gc as f64).abs() * SPACING.voxel_volume_mm3() / 1000.0;
        assert_eq!(avd_ml(&pv, &gv, SPACING).unwrap(), avd_oracle, "case {case}");

        // distances are exact
        let (hd_oracle, ad_oracle) = if pc == 0 && gc == 0 {
            (0.0, 0.0)
        } else if pc == 0 || gc == 0 {
            let diag = volume_diagonal_mm(DIMS, SPACING);
            (diag, diag)
        } else {
            let pb = p.boundary();
            let gb = g.boundary();
            let (max_pg, mean_pg) = oracle_directed(&pb, &gb);
            let (max_gp, mean_gp) = oracle_directed(&gb, &pb);
            (max_pg.max(max_gp), (mean_pg + mean_gp) / 2.0)
        };
        assert_eq!(hausdorff_mm(&pv, &gv, SPACING).unwrap(), hd_oracle, "case {case}");
        assert_eq!(avg_dist_mm(&pv, &gv, SPACING).unwrap(), ad_oracle, "case {case}");
    }
}

#[test]
fn symmetry_and_harmonic_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let p = OracleMask::random(&mut rng, 0.15).to_volume();
        let g = OracleMask::random(&mut rng, 0.15).to_volume();
        assert_eq!(dice(&p, &g).unwrap(), dice(&g, &p).unwrap());
        assert_eq!(
            hausdorff_mm(&p, &g, SPACING).unwrap(),
            hausdorff_mm(&g, &p, SPACING).unwrap()
        );
        assert_eq!(
            avg_dist_mm(&p, &g, SPACING).unwrap(),
            avg_dist_mm(&g, &p, SPACING).unwrap()
        );

        // dice = 2PR / (P + R) whenever P + R > 0
        let pr = precision(&p, &g).unwrap();
        let rc = recall(&p, &g).unwrap();
        if pr + rc > 0.0 {
            let harmonic = 2.0 * pr * rc / (pr + rc);
            assert!((dice(&p, &g).unwrap() - harmonic).abs() < 1e-9);
        }
    }
}

#[test]
fn unit_spacing_mode_changes_distances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = OracleMask::random(&mut rng, 0.1).to_volume();
    let g = OracleMask::random(&mut rng, 0.1).to_volume();
    let aniso = hausdorff_mm(&p, &g, SPACING).unwrap();
    let unit = hausdorff_mm(&p, &g, Spacing::UNIT).unwrap();
    assert!(unit <= aniso);
}
