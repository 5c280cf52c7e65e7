//! Voxel traversal of line segments: the conservative capsule walk, the
//! zero-radius DDA baseline, and brute-force bounding-box enumeration.
//!
//! All coordinates are in voxel units: voxel `(i, j, k)` covers
//! `[i, i + 1] x [j, j + 1] x [k, k + 1]`.

use glam::{DVec3, IVec3, UVec3};

use crate::lineset::Capsule;

/// Slack added to every floor() so boundary-touching voxels are kept.
const EPS: f64 = 1e-9;

/// Axes of a segment delta ordered by decreasing magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AxisRank {
    pub axes: [usize; 3],
    /// Set when the major component is negative, i.e. the walk runs from `v1` to `v0`.
    pub swapped: bool,
}

impl AxisRank {
    pub fn major(&self) -> usize {
        self.axes[0]
    }
}

/// Ranks `|d|` components, ties resolved x before y before z. `None` for a zero vector.
pub fn rank_axes(d: DVec3) -> Option<AxisRank> {
    if d == DVec3::ZERO {
        return None;
    }
    let mag = d.abs();
    let mut axes = [0usize, 1, 2];
    // Stable sort keeps the fixed axis priority on ties.
    axes.sort_by(|&a, &b| mag[b].partial_cmp(&mag[a]).unwrap());
    Some(AxisRank {
        axes,
        swapped: d[axes[0]] < 0.0,
    })
}

/// `r / sqrt(1 - (d_a / |d|)^2)` for both minor axes: the half-width of the
/// tube measured along a minor axis within the plane spanned by that axis and
/// the segment. It bounds the tube cross-section only when the other minor
/// component of `d` is zero.
pub fn projected_radii(d: DVec3, r: f64, rank: &AxisRank) -> [f64; 2] {
    let len = d.length();
    [1, 2].map(|i| {
        let u = d[rank.axes[i]] / len;
        r / (1.0 - u * u).sqrt()
    })
}

/// Half-widths along each minor axis of the tube slice cut by a plane of
/// constant major coordinate: `r * sqrt(1 + (d_a / d_major)^2)`.
///
/// Equals [`projected_radii`] when `d` has at most two non-zero components
/// and is strictly larger otherwise; the walk in [`traverse_capsule`] needs
/// this bound to stay conservative for general 3D directions.
pub fn slice_radii(d: DVec3, r: f64, rank: &AxisRank) -> [f64; 2] {
    let major = d[rank.major()];
    [1, 2].map(|i| {
        let s = d[rank.axes[i]] / major;
        r * (1.0 + s * s).sqrt()
    })
}

/// Inclusive voxel range `[floor(lo), floor(hi)]` clamped to the grid, `None` when empty.
fn voxel_range(lo: f64, hi: f64, resolution: u32) -> Option<(u32, u32)> {
    let lo = (lo - EPS).floor().max(0.0);
    let hi = (hi + EPS).floor().min(resolution as f64 - 1.0);
    (lo <= hi).then_some((lo as u32, hi as u32))
}

fn aabb_ranges(c: &Capsule, resolution: u32) -> Option<[(u32, u32); 3]> {
    let (lo, hi) = c.aabb();
    Some([
        voxel_range(lo.x, hi.x, resolution)?,
        voxel_range(lo.y, hi.y, resolution)?,
        voxel_range(lo.z, hi.z, resolution)?,
    ])
}

/// Inclusive voxel ranges overlapping the capsule's bounding box inflated by its radius.
pub fn capsule_voxel_bounds(c: &Capsule, resolution: u32) -> Option<[(u32, u32); 3]> {
    aabb_ranges(c, resolution)
}

/// Every voxel overlapping the capsule's bounding box inflated by `r`.
pub fn traverse_aabb(c: &Capsule, resolution: u32, mut visit: impl FnMut(UVec3)) {
    let Some([(x0, x1), (y0, y1), (z0, z1)]) = aabb_ranges(c, resolution) else {
        return;
    };
    for z in z0..=z1 {
        for y in y0..=y1 {
            for x in x0..=x1 {
                visit(UVec3::new(x, y, z));
            }
        }
    }
}

/// Conservative capsule traversal: walk the major axis one voxel slab at a
/// time and visit the 2D box around the line covering the tube slice.
///
/// Every visited voxel lies within the capsule's inflated bounding box, so the
/// visited set is a subset of [`traverse_aabb`]. Zero-length segments fall back
/// to the bounding box of their sphere.
pub fn traverse_capsule(c: &Capsule, resolution: u32, visit: impl FnMut(UVec3)) {
    walk_capsule(c, resolution, slice_radii, visit)
}

fn walk_capsule(
    c: &Capsule,
    resolution: u32,
    minor_radii: fn(DVec3, f64, &AxisRank) -> [f64; 2],
    mut visit: impl FnMut(UVec3),
) {
    let d = c.delta();
    let Some(rank) = rank_axes(d) else {
        traverse_aabb(c, resolution, visit);
        return;
    };
    let Some(bounds) = aabb_ranges(c, resolution) else {
        return;
    };
    let (v0, d) = if rank.swapped { (c.v1, -d) } else { (c.v0, d) };
    let [a0, a1, a2] = rank.axes;
    let step = d / d[a0];
    let [r1, r2] = minor_radii(d, c.r, &rank);

    let start = v0 - step * (c.r + EPS);
    let t_min = start[a0];
    let t_max = v0[a0] + d[a0] + c.r + EPS;

    let clamp = |range: Option<(u32, u32)>, axis: usize| {
        range.and_then(|(lo, hi)| {
            let lo = lo.max(bounds[axis].0);
            let hi = hi.min(bounds[axis].1);
            (lo <= hi).then_some((lo, hi))
        })
    };

    let mut t0 = t_min;
    let mut p0 = start;
    while t0 < t_max {
        let t1 = t_max.min((t0 + 1.0).floor());
        let p1 = start + step * (t1 - t_min);

        let major = t0.floor();
        if major >= bounds[a0].0 as f64 && major <= bounds[a0].1 as f64 {
            let js = clamp(
                voxel_range(p0[a1].min(p1[a1]) - r1, p0[a1].max(p1[a1]) + r1, resolution),
                a1,
            );
            let ks = clamp(
                voxel_range(p0[a2].min(p1[a2]) - r2, p0[a2].max(p1[a2]) + r2, resolution),
                a2,
            );
            if let (Some((j0, j1)), Some((k0, k1))) = (js, ks) {
                let mut coord = UVec3::ZERO;
                coord[a0] = major as u32;
                for k in k0..=k1 {
                    coord[a2] = k;
                    for j in j0..=j1 {
                        coord[a1] = j;
                        visit(coord);
                    }
                }
            }
        }

        t0 = t1;
        p0 = p1;
    }
}

/// Amanatides–Woo walk of the voxels pierced by the segment `v0 → v1`, in order.
/// Ties between axes step x before y before z. Voxels outside the grid are skipped.
pub fn traverse_dda(v0: DVec3, v1: DVec3, resolution: u32, mut visit: impl FnMut(UVec3)) {
    traverse_dda_until(v0, v1, resolution, |c| {
        visit(c);
        true
    });
}

/// [`traverse_dda`] that stops as soon as `visit` returns false.
pub fn traverse_dda_until(v0: DVec3, v1: DVec3, resolution: u32, mut visit: impl FnMut(UVec3) -> bool) {
    let res = resolution as i32;
    let inside = |c: IVec3| c.cmpge(IVec3::ZERO).all() && c.cmplt(IVec3::splat(res)).all();
    let mut cell = v0.floor().as_ivec3();
    let end = v1.floor().as_ivec3();
    let d = v1 - v0;

    let mut step = IVec3::ZERO;
    let mut t_max = DVec3::splat(f64::INFINITY);
    let mut t_delta = DVec3::splat(f64::INFINITY);
    for a in 0..3 {
        if d[a] > 0.0 {
            step[a] = 1;
            t_max[a] = (cell[a] as f64 + 1.0 - v0[a]) / d[a];
            t_delta[a] = 1.0 / d[a];
        } else if d[a] < 0.0 {
            step[a] = -1;
            t_max[a] = (cell[a] as f64 - v0[a]) / d[a];
            t_delta[a] = -1.0 / d[a];
        }
    }

    let max_steps = (end - cell).abs().element_sum();
    for _ in 0..=max_steps {
        if inside(cell) && !visit(cell.as_uvec3()) {
            return;
        }
        if cell == end {
            break;
        }
        let axis = if t_max.x <= t_max.y && t_max.x <= t_max.z {
            0
        } else if t_max.y <= t_max.z {
            1
        } else {
            2
        };
        if t_max[axis] > 1.0 {
            break;
        }
        cell[axis] += step[axis];
        t_max[axis] += t_delta[axis];
    }
}
