//! Cone-traced ambient occlusion and directional shadows over the occupancy pyramid.

use glam::{DVec3, UVec3};
use rayon::prelude::*;

use crate::culling::CullingPyramid;
use crate::voxelizer::{voxel_center, voxel_coord, OccupancyPyramid};

/// Occlusion at which a cone counts as fully blocked.
pub const SATURATION: f64 = 0.99;

/// Default shadow cone half-angle: 5 degrees.
pub const SHADOW_HALF_ANGLE: f64 = 5.0 * std::f64::consts::PI / 180.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ConeSet {
    pub directions: Vec<DVec3>,
    pub weights: Vec<f64>,
    pub half_angle: f64,
}

impl ConeSet {
    /// The 12 icosahedron vertex directions, each covering an equal solid angle
    /// (cos of the half-angle = 1 - 2/12).
    pub fn icosahedron() -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut directions = Vec::with_capacity(12);
        for a in [-1.0, 1.0] {
            for b in [-phi, phi] {
                directions.push(DVec3::new(0.0, a, b).normalize());
                directions.push(DVec3::new(a, b, 0.0).normalize());
                directions.push(DVec3::new(b, 0.0, a).normalize());
            }
        }
        ConeSet {
            directions,
            weights: vec![1.0 / 12.0; 12],
            half_angle: (1.0 - 2.0 / 12.0f64).acos(),
        }
    }

    /// Same cones with every direction mapped through `f`.
    pub fn mapped(&self, f: impl Fn(DVec3) -> DVec3) -> Self {
        ConeSet {
            directions: self.directions.iter().map(|&d| f(d)).collect(),
            ..self.clone()
        }
    }
}

/// Occlusion seen from `origin` (voxel units) along the cone.
///
/// Marches from one voxel out, stepping by the cone diameter and sampling the
/// mip whose texel matches it, accumulating front to back. Reaching
/// [`SATURATION`] returns 1.
pub fn cone_trace(pyramid: &OccupancyPyramid, origin: DVec3, dir: DVec3, half_angle: f64) -> f64 {
    let size = pyramid.resolution() as f64;
    let inside = |p: DVec3| p.cmpge(DVec3::ZERO).all() && p.cmple(DVec3::splat(size)).all();
    if !inside(origin) {
        return 0.0;
    }
    let spread = 2.0 * half_angle.tan();
    let mut occ = 0.0;
    let mut t = 1.0;
    loop {
        let p = origin + dir * t;
        if !inside(p) {
            return occ;
        }
        let diameter = (spread * t).max(1.0);
        let sample = pyramid.sample_lod(diameter.log2(), p).clamp(0.0, 1.0);
        occ += (1.0 - occ) * sample;
        if occ >= SATURATION {
            return 1.0;
        }
        t += diameter;
    }
}

/// Per-voxel ambient occlusion and shadow terms; 1 means unoccluded / lit.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadingVolume {
    pub resolution: u32,
    pub ao: Vec<f32>,
    pub shadow: Vec<f32>,
    /// Direction the light travels.
    pub light_dir: DVec3,
}

impl ShadingVolume {
    pub fn unlit(resolution: u32, light_dir: DVec3) -> Self {
        let n = (resolution as usize).pow(3);
        ShadingVolume {
            resolution,
            ao: vec![1.0; n],
            shadow: vec![1.0; n],
            light_dir,
        }
    }

    /// Trilinear `(ao, shadow)` at `p` in voxel units, clamped to the edge texels.
    pub fn sample(&self, p: DVec3) -> (f64, f64) {
        let n = self.resolution as i64;
        let q = p - DVec3::splat(0.5);
        let b = q.floor();
        let f = q - b;
        let (mut ao, mut sh) = (0.0, 0.0);
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let w: f64 = (0..3).map(|a| if o[a] == 1 { f[a] } else { 1.0 - f[a] }).product();
            if w == 0.0 {
                continue;
            }
            let c = [0, 1, 2].map(|a| (b[a] as i64 + o[a] as i64).clamp(0, n - 1) as usize);
            let i = c[0] + n as usize * (c[1] + n as usize * c[2]);
            ao += w * self.ao[i] as f64;
            sh += w * self.shadow[i] as f64;
        }
        (ao, sh)
    }

    pub fn at(&self, c: UVec3) -> (f64, f64) {
        let i = crate::voxelizer::voxel_index(self.resolution, c);
        (self.ao[i] as f64, self.shadow[i] as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShadingParams {
    pub cones: ConeSet,
    pub shadow_half_angle: f64,
}

impl Default for ShadingParams {
    fn default() -> Self {
        ShadingParams {
            cones: ConeSet::icosahedron(),
            shadow_half_angle: SHADOW_HALF_ANGLE,
        }
    }
}

/// Shading at the centre of every voxel set in `culling`; other voxels stay at 1.
pub fn compute_shading(pyramid: &OccupancyPyramid, culling: &CullingPyramid, light_dir: DVec3) -> ShadingVolume {
    compute_shading_with(pyramid, culling, light_dir, &ShadingParams::default())
}

pub fn compute_shading_with(
    pyramid: &OccupancyPyramid,
    culling: &CullingPyramid,
    light_dir: DVec3,
    params: &ShadingParams,
) -> ShadingVolume {
    let res = pyramid.resolution();
    assert_eq!(culling.resolution(), res);
    let light_dir = light_dir.normalize();
    let to_light = -light_dir;
    let (ao, shadow): (Vec<f32>, Vec<f32>) = (0..(res as usize).pow(3))
        .into_par_iter()
        .map(|i| {
            if !culling.is_set(i) {
                return (1.0, 1.0);
            }
            let p = voxel_center(voxel_coord(res, i));
            let occluded: f64 = params
                .cones
                .directions
                .iter()
                .zip(&params.cones.weights)
                .map(|(&d, &w)| w * cone_trace(pyramid, p, d, params.cones.half_angle))
                .sum();
            let lit = 1.0 - cone_trace(pyramid, p, to_light, params.shadow_half_angle);
            ((1.0 - occluded).clamp(0.0, 1.0) as f32, lit.clamp(0.0, 1.0) as f32)
        })
        .unzip();
    ShadingVolume {
        resolution: res,
        ao,
        shadow,
        light_dir,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::culling::BitPyramid;
    use crate::test_oracle::SplitMix;
    use crate::voxelizer::voxel_index;

    fn field(res: u32, mut f: impl FnMut(UVec3) -> f64) -> Vec<f64> {
        (0..(res as usize).pow(3)).map(|i| f(voxel_coord(res, i))).collect()
    }

    #[test]
    fn icosahedron_cones() {
        let c = ConeSet::icosahedron();
        assert_eq!(c.directions.len(), 12);
        let mean: DVec3 = c.directions.iter().sum::<DVec3>() / 12.0;
        assert!(mean.length() < 1e-12);
        for d in &c.directions {
            assert!((d.length() - 1.0).abs() < 1e-12);
            assert!(c.directions.iter().any(|e| (*e + *d).length() < 1e-12));
            // five nearest neighbours at the icosahedron edge angle
            let near = c.directions.iter().filter(|e| (e.dot(*d) - 1.0 / 5f64.sqrt()).abs() < 1e-9).count();
            assert_eq!(near, 5);
        }
        assert!((c.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((c.half_angle.to_degrees() - 33.557).abs() < 1e-3);
    }

    #[test]
    fn empty_and_full_pyramids() {
        let empty = OccupancyPyramid::from_occupancy(16, &vec![0.0; 4096]);
        let full = OccupancyPyramid::from_occupancy(16, &vec![1.0; 4096]);
        let mut rng = SplitMix(1);
        for _ in 0..50 {
            let o = DVec3::new(rng.range(2.0, 14.0), rng.range(2.0, 14.0), rng.range(2.0, 14.0));
            let d = rng.direction();
            assert_eq!(cone_trace(&empty, o, d, 0.5), 0.0);
            assert!(cone_trace(&full, o, d, 0.5) >= 0.99);
        }
        assert_eq!(cone_trace(&full, DVec3::splat(-1.0), DVec3::X, 0.5), 0.0);
    }

    #[test]
    fn half_space_occlusion() {
        let p = OccupancyPyramid::from_occupancy(16, &field(16, |c| if c.z < 8 { 1.0 } else { 0.0 }));
        let half = ConeSet::icosahedron().half_angle;
        for (x, y) in [(8.0, 8.0), (3.5, 11.5), (1.5, 14.5)] {
            let o = DVec3::new(x, y, 8.5);
            assert!(cone_trace(&p, o, -DVec3::Z, half) >= 0.99);
            assert!(cone_trace(&p, o, DVec3::Z, half) <= 0.05);
        }
    }

    #[test]
    fn isolated_voxel_is_unoccluded() {
        let mut occ = vec![0.0; 4096];
        let v = voxel_index(16, UVec3::splat(8));
        occ[v] = 1.0;
        let p = OccupancyPyramid::from_occupancy(16, &occ);
        let cull = BitPyramid::occupied(&p);
        let s = compute_shading(&p, &cull, DVec3::new(0.3, -0.2, -1.0));
        // only the voxel's own texel leaks into the first trilinear samples
        assert!(s.ao[v] >= 0.9 && s.ao[v] < 1.0, "ao {}", s.ao[v]);
        assert!(s.shadow[v] >= 0.95 && s.shadow[v] < 1.0, "shadow {}", s.shadow[v]);
        let empty = OccupancyPyramid::from_occupancy(16, &vec![0.0; 4096]);
        let s = compute_shading(&empty, &BitPyramid::full(16), DVec3::new(0.3, -0.2, -1.0));
        assert!(s.ao.iter().chain(&s.shadow).all(|&x| x == 1.0));
    }

    #[test]
    fn slab_casts_shadow() {
        let res = 16;
        let mut occ = field(res, |c| if (11..14).contains(&c.z) { 1.0 } else { 0.0 });
        let probe = voxel_index(res, UVec3::new(8, 8, 4));
        occ[probe] = 0.5;
        let p = OccupancyPyramid::from_occupancy(res, &occ);
        let mut mask = vec![false; 4096];
        mask[probe] = true;
        let cull = BitPyramid::from_base(res, mask);
        let s = compute_shading(&p, &cull, -DVec3::Z);
        assert!(s.shadow[probe] <= 0.05, "shadow {}", s.shadow[probe]);
        let s = compute_shading(&p, &cull, DVec3::Z);
        assert!(s.shadow[probe] >= 0.95);
        // unmarked voxels hold the neutral value
        assert_eq!(s.ao[0], 1.0);
        assert_eq!(s.shadow[0], 1.0);
    }

    #[test]
    fn values_stay_in_unit_interval() {
        let mut rng = SplitMix(7);
        let p = OccupancyPyramid::from_occupancy(16, &field(16, |_| rng.range(-0.5, 1.5).max(0.0)));
        let s = compute_shading(&p, &BitPyramid::full(16), DVec3::new(1.0, 2.0, -3.0));
        assert!(s.ao.iter().chain(&s.shadow).all(|&v| (0.0..=1.0).contains(&v)));
    }

    /// The 24 proper rotations of the cube as signed axis permutations.
    fn cube_rotations() -> Vec<([usize; 3], [i32; 3])> {
        let perms = [[0, 1, 2], [1, 2, 0], [2, 0, 1], [1, 0, 2], [0, 2, 1], [2, 1, 0]];
        let mut out = Vec::new();
        for (k, p) in perms.iter().enumerate() {
            let parity = if k < 3 { 1 } else { -1 };
            for s in 0..8 {
                let sign = [0, 1, 2].map(|a| if s >> a & 1 == 1 { -1 } else { 1 });
                if sign[0] * sign[1] * sign[2] * parity == 1 {
                    out.push((*p, sign));
                }
            }
        }
        out
    }

    #[test]
    fn ao_is_rotation_invariant() {
        let res = 16u32;
        let mut rng = SplitMix(13);
        let occ: Vec<f64> = (0..4096).map(|_| if rng.unit() < 0.15 { rng.unit() } else { 0.0 }).collect();
        let base = OccupancyPyramid::from_occupancy(res, &occ);
        let full = BitPyramid::full(res);
        let reference = compute_shading(&base, &full, -DVec3::Z);
        let rots = cube_rotations();
        assert_eq!(rots.len(), 24);
        for (perm, sign) in rots {
            let rot_vec = |v: DVec3| DVec3::new(sign[0] as f64 * v[perm[0]], sign[1] as f64 * v[perm[1]], sign[2] as f64 * v[perm[2]]);
            let rot_coord = |c: UVec3| {
                UVec3::from_array([0, 1, 2].map(|a| {
                    let v = c[perm[a]];
                    if sign[a] < 0 { res - 1 - v } else { v }
                }))
            };
            let mut rotated = vec![0.0; 4096];
            for i in 0..4096 {
                rotated[voxel_index(res, rot_coord(voxel_coord(res, i)))] = occ[i];
            }
            let p = OccupancyPyramid::from_occupancy(res, &rotated);
            let params = ShadingParams {
                cones: ConeSet::icosahedron().mapped(rot_vec),
                ..ShadingParams::default()
            };
            let s = compute_shading_with(&p, &full, rot_vec(-DVec3::Z), &params);
            for i in 0..4096 {
                let j = voxel_index(res, rot_coord(voxel_coord(res, i)));
                assert!((s.ao[j] - reference.ao[i]).abs() <= 1e-3);
                assert!((s.shadow[j] - reference.shadow[i]).abs() <= 1e-3);
            }
        }
    }

    #[test]
    fn adding_occupancy_never_raises_ao() {
        let res = 16u32;
        let mut rng = SplitMix(17);
        let occ: Vec<f64> = (0..4096).map(|_| if rng.unit() < 0.2 { rng.unit() } else { 0.0 }).collect();
        let full = BitPyramid::full(res);
        let before = compute_shading(&OccupancyPyramid::from_occupancy(res, &occ), &full, -DVec3::Z);
        for _ in 0..24 {
            let mut more = occ.clone();
            let v = (rng.next_u64() % 4096) as usize;
            more[v] = (more[v] + rng.range(0.05, 1.0)).min(1.0);
            let after = compute_shading(&OccupancyPyramid::from_occupancy(res, &more), &full, -DVec3::Z);
            for i in 0..4096 {
                assert!(after.ao[i] <= before.ao[i] + 1e-6, "voxel {i}: {} > {}", after.ao[i], before.ao[i]);
                assert!(after.shadow[i] <= before.shadow[i] + 1e-6);
            }
        }
    }

    #[test]
    fn volume_sampling_is_trilinear() {
        let mut s = ShadingVolume::unlit(2, -DVec3::Z);
        s.ao = vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let (ao, sh) = s.sample(DVec3::new(1.0, 1.0, 1.0));
        assert!((ao - 0.5).abs() < 1e-12 && sh == 1.0);
        assert_eq!(s.sample(DVec3::new(0.1, 0.5, 0.5)).0, 0.0);
        assert_eq!(s.at(UVec3::new(1, 0, 0)).0, 1.0);
    }
}
