//! Property-based invariants across the pipeline stages.

use std::collections::HashSet;

use glam::{DVec3, UVec3};
use proptest::prelude::*;

use voxline_core::abuffer::{build_vss, build_vsv, morton_decode, morton_encode, per_voxel_lists};
use voxline_core::culling::{erode, BitPyramid};
use voxline_core::lineset::Capsule;
use voxline_core::raytracer::{ray_capsule, PackedHit, Ray};
use voxline_core::voxelizer::{
    capsule_occupancy, clipped_capsule_sdf, voxelize, Method, SegmentTable, DEFAULT_R_MIN,
};

fn point(max: f64) -> impl Strategy<Value = DVec3> {
    (0.0..max, 0.0..max, 0.0..max).prop_map(|(x, y, z)| DVec3::new(x, y, z))
}

fn capsule(max: f64) -> impl Strategy<Value = Capsule> {
    (point(max), point(max), 0.05..2.0f64).prop_map(|(a, b, r)| Capsule::new(a, b, r))
}

fn visited(method: Method, c: &Capsule, res: u32) -> HashSet<[u32; 3]> {
    let mut out = HashSet::new();
    method.traverse(c, res, |v| {
        out.insert(v.to_array());
    });
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn morton_round_trips(x in 0u32..1024, y in 0u32..1024, z in 0u32..1024) {
        let c = UVec3::new(x, y, z);
        prop_assert_eq!(morton_decode(morton_encode(c).unwrap()), c);
    }

    #[test]
    fn packed_keys_follow_depth(t_enter in 0.0..50.0f64, len in 0.01..2.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64, sa in 0u32..65536, sb in 0u32..65536) {
        let t_exit = t_enter + len;
        let ka = PackedHit::new(t_enter + a * len, t_enter, t_exit, sa);
        let kb = PackedHit::new(t_enter + b * len, t_enter, t_exit, sb);
        if a < b {
            prop_assert!(ka.depth() <= kb.depth());
        }
        prop_assert_eq!(ka < kb, (ka.depth(), sa) < (kb.depth(), sb));
    }

    #[test]
    fn traversals_nest(c in capsule(24.0)) {
        let dda = visited(Method::Dda, &c, 32);
        let cap = visited(Method::Capsule, &c, 32);
        let aabb = visited(Method::Aabb, &c, 32);
        prop_assert!(dda.is_subset(&cap));
        prop_assert!(cap.is_subset(&aabb));
    }

    #[test]
    fn occupancy_is_a_fraction(c in capsule(8.0), p in point(8.0), r_min in 0.1..1.0f64) {
        let o = capsule_occupancy(p, &c, r_min);
        prop_assert!((0.0..=1.0).contains(&o));
    }

    #[test]
    fn voxelization_ignores_segment_order(caps in prop::collection::vec(capsule(15.0), 1..20), shift in 0usize..20) {
        let mut rotated = caps.clone();
        rotated.rotate_left(shift % caps.len());
        let a = voxelize(&SegmentTable::from_capsules(caps), 16, Method::Capsule, DEFAULT_R_MIN);
        let b = voxelize(&SegmentTable::from_capsules(rotated), 16, Method::Capsule, DEFAULT_R_MIN);
        prop_assert_eq!(a.base(), b.base());
    }

    #[test]
    fn strategies_agree(caps in prop::collection::vec(capsule(15.0), 0..20)) {
        let t = SegmentTable::from_capsules(caps);
        let p = voxelize(&t, 16, Method::Capsule, DEFAULT_R_MIN);
        let vsv = build_vsv(&t, &p, Method::Capsule, DEFAULT_R_MIN).unwrap();
        let vss = build_vss(&t, 16, Method::Capsule, DEFAULT_R_MIN).unwrap();
        prop_assert_eq!(per_voxel_lists(&vsv), per_voxel_lists(&vss));
        prop_assert_eq!(vsv.stats.touches(), 2 * vsv.stats.incidences);
    }

    #[test]
    fn erosion_shrinks(field in prop::collection::vec(0.0..1.0f64, 512)) {
        let e = erode(&field, 8);
        prop_assert!(e.iter().zip(&field).all(|(a, b)| a <= b));
    }

    #[test]
    fn bit_pyramid_parents_are_or_of_children(bits in prop::collection::vec(prop::bool::weighted(0.05), 512)) {
        let p = BitPyramid::from_base(8, bits);
        for level in 1..p.levels() {
            let n = p.level_resolution(level);
            for i in 0..(n * n * n) {
                let c = UVec3::new(i % n, i / n % n, i / (n * n));
                let any = (0..8u32).any(|k| p.get(level - 1, c * 2 + UVec3::new(k & 1, (k >> 1) & 1, k >> 2)));
                prop_assert_eq!(p.get(level, c), any);
            }
        }
    }

    #[test]
    fn ray_hits_lie_on_the_surface(c in capsule(8.0), o in point(8.0), target in point(8.0)) {
        prop_assume!((target - o).length() > 1e-3);
        let ray = Ray::new(o - (target - o) * 3.0, target - o);
        if let Some(hit) = ray_capsule(&ray, &c) {
            prop_assert!(clipped_capsule_sdf(ray.at(hit.t), &c).abs() <= 1e-4);
        }
    }
}
