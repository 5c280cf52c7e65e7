use glam::DVec3;

use crate::lineset::Capsule;

/// Signed distance to a capsule truncated by its clip planes.
///
/// The result is the max of the capsule distance and the two half-space
/// distances, so it is exact on the surface and a bound elsewhere.
pub fn clipped_capsule_sdf(p: DVec3, c: &Capsule) -> f64 {
    let d = c.delta();
    let pv0 = p - c.v0;
    let pv1 = p - c.v1;
    let dd = d.length_squared();
    let h = if dd > 0.0 {
        (pv0.dot(d) / dd).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut sdf = (pv0 - d * h).length() - c.r;
    if let Some(n0) = c.n0 {
        sdf = sdf.max(-pv0.dot(n0));
    }
    if let Some(n1) = c.n1 {
        sdf = sdf.max(pv1.dot(n1));
    }
    sdf
}

/// Occupancy estimate at a voxel center (voxel units), with sub-`r_min` tubes
/// widened to `r_min` and attenuated by the squared radius ratio.
pub fn capsule_occupancy(p: DVec3, c: &Capsule, r_min: f64) -> f64 {
    let r_clamp = c.r.max(r_min);
    let correction = (c.r / r_clamp).powi(2);
    let sdf = clipped_capsule_sdf(p, &c.with_radius(r_clamp));
    (0.5 - sdf).clamp(0.0, 1.0) * correction
}
