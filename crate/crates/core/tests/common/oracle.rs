//! Independent reference computations shared by unit and integration tests.
#![allow(dead_code)]

use glam::DVec3;

/// Euclidean distance from `p` to the closed box `[lo, hi]`.
pub fn point_box_distance(p: DVec3, lo: DVec3, hi: DVec3) -> f64 {
    (lo - p).max(DVec3::ZERO).max(p - hi).length()
}

/// Exact distance between segment `a → b` and the closed box `[lo, hi]`.
///
/// The point-to-box distance is convex, so its restriction to the segment is
/// a convex function of the segment parameter; golden-section search finds the
/// minimum to machine precision.
pub fn segment_box_distance(a: DVec3, b: DVec3, lo: DVec3, hi: DVec3) -> f64 {
    let f = |t: f64| point_box_distance(a.lerp(b, t), lo, hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut l, mut r) = (0.0f64, 1.0f64);
    let mut x1 = r - inv_phi * (r - l);
    let mut x2 = l + inv_phi * (r - l);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 <= f2 {
            r = x2;
            x2 = x1;
            f2 = f1;
            x1 = r - inv_phi * (r - l);
            f1 = f(x1);
        } else {
            l = x1;
            x1 = x2;
            f1 = f2;
            x2 = l + inv_phi * (r - l);
            f2 = f(x2);
        }
    }
    f(0.0).min(f(1.0)).min(f1).min(f2)
}

/// Distance from the segment to the unit voxel `coord`.
pub fn segment_voxel_distance(a: DVec3, b: DVec3, coord: [u32; 3]) -> f64 {
    let lo = DVec3::new(coord[0] as f64, coord[1] as f64, coord[2] as f64);
    segment_box_distance(a, b, lo, lo + DVec3::ONE)
}

/// Every voxel of a `res^3` grid within distance `r` of segment `a → b`.
///
/// Voxels within `slack` of the threshold are left out so floating-point ties
/// on the boundary do not count as misses.
pub fn voxels_within(a: DVec3, b: DVec3, r: f64, res: u32, slack: f64) -> Vec<[u32; 3]> {
    let lo = (a.min(b) - DVec3::splat(r + 1.0)).floor().max(DVec3::ZERO).as_uvec3();
    let hi = (a.max(b) + DVec3::splat(r + 1.0))
        .floor()
        .min(DVec3::splat(res as f64 - 1.0))
        .as_uvec3();
    let mut out = Vec::new();
    for z in lo.z..=hi.z {
        for y in lo.y..=hi.y {
            for x in lo.x..=hi.x {
                if segment_voxel_distance(a, b, [x, y, z]) <= r - slack {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// Splitmix-style generator so oracle fixtures do not depend on the library's RNG.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn direction(&mut self) -> DVec3 {
        loop {
            let v = DVec3::new(self.range(-1.0, 1.0), self.range(-1.0, 1.0), self.range(-1.0, 1.0));
            let l = v.length_squared();
            if l > 1e-6 && l <= 1.0 {
                return v / l.sqrt();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    // harness-less targets compile this module without running it
    #[allow(unused_imports)]
    use super::*;

    #[test]
    fn segment_box_distance_matches_dense_sampling() {
        let mut rng = SplitMix(99);
        for _ in 0..300 {
            let a = DVec3::new(rng.range(-3.0, 4.0), rng.range(-3.0, 4.0), rng.range(-3.0, 4.0));
            let b = DVec3::new(rng.range(-3.0, 4.0), rng.range(-3.0, 4.0), rng.range(-3.0, 4.0));
            let lo = DVec3::ZERO;
            let hi = DVec3::ONE;
            let exact = segment_box_distance(a, b, lo, hi);
            let n = 20_000;
            let sampled = (0..=n)
                .map(|i| point_box_distance(a.lerp(b, i as f64 / n as f64), lo, hi))
                .fold(f64::INFINITY, f64::min);
            let step = (b - a).length() / n as f64;
            assert!(exact <= sampled + 1e-12);
            assert!(sampled - exact <= step, "exact {exact} sampled {sampled}");
        }
    }
}
