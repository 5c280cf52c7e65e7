//! Per-pixel voxel ray tracing with opaque early termination and ordered transparency.

use std::io::Write;
use std::str::FromStr;

use glam::{DVec3, IVec3, UVec3};
use rayon::prelude::*;

use crate::abuffer::ABuffer;
use crate::culling::{BitPyramid, Camera};
use crate::error::{Error, Result};
use crate::lineset::Capsule;
use crate::shading::ShadingVolume;
use crate::voxelizer::{GridDesc, SegmentTable};

/// Accumulated opacity at which a transparent ray stops.
pub const OPACITY_CUTOFF: f64 = 0.999;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: DVec3,
    pub dir: DVec3,
}

impl Ray {
    pub fn new(origin: DVec3, dir: DVec3) -> Self {
        Ray {
            origin,
            dir: dir.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> DVec3 {
        self.origin + self.dir * t
    }

    /// Primary ray through the centre of pixel `(x, y)`.
    pub fn primary(cam: &Camera, x: u32, y: u32) -> Self {
        Ray {
            origin: cam.position,
            dir: cam.pixel_direction(x, y),
        }
    }

    /// Same ray in voxel units of `grid`; distances scale by `1 / voxel_size`.
    pub fn to_voxel_space(&self, grid: &GridDesc) -> Self {
        Ray {
            origin: grid.to_voxel(self.origin),
            dir: self.dir,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapsuleHit {
    pub t: f64,
    /// Outward surface normal.
    pub normal: DVec3,
}

/// Parameter interval of the ray inside a convex set, or `None` when disjoint.
type Span = Option<(f64, f64)>;

fn sphere_span(ray: &Ray, center: DVec3, r: f64) -> Span {
    let oc = ray.origin - center;
    let b = oc.dot(ray.dir);
    let c = oc.length_squared() - r * r;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some((-b - s, -b + s))
}

/// Finite cylinder between the planes through `v0` and `v1` perpendicular to the axis.
fn cylinder_span(ray: &Ray, v0: DVec3, v1: DVec3, r: f64) -> Span {
    let axis = v1 - v0;
    let len = axis.length();
    if len == 0.0 {
        return None;
    }
    let u = axis / len;
    let oc = ray.origin - v0;
    let d_perp = ray.dir - u * ray.dir.dot(u);
    let o_perp = oc - u * oc.dot(u);
    let a = d_perp.length_squared();
    let (mut lo, mut hi) = if a < 1e-24 {
        if o_perp.length_squared() > r * r {
            return None;
        }
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        let b = o_perp.dot(d_perp);
        let c = o_perp.length_squared() - r * r;
        let disc = b * b - a * c;
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        ((-b - s) / a, (-b + s) / a)
    };
    let (s0, sd) = (oc.dot(u), ray.dir.dot(u));
    let slab = half_line(s0, sd, 0.0, true).and_then(|(a, b)| {
        let (c, d) = half_line(s0, sd, len, false)?;
        Some((a.max(c), b.min(d)))
    })?;
    lo = lo.max(slab.0);
    hi = hi.min(slab.1);
    (lo <= hi).then_some((lo, hi))
}

/// Interval of t with `s0 + t·sd >= bound` (`above`) or `<= bound`.
fn half_line(s0: f64, sd: f64, bound: f64, above: bool) -> Span {
    let sign = if above { 1.0 } else { -1.0 };
    let (s0, sd, bound) = (s0 * sign, sd * sign, bound * sign);
    if sd == 0.0 {
        return (s0 >= bound).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let t = (bound - s0) / sd;
    Some(if sd > 0.0 { (t, f64::INFINITY) } else { (f64::NEG_INFINITY, t) })
}

/// Nearest `t >= 0` where the ray meets the surface of the clipped capsule.
///
/// The capsule is convex, so the ray crosses it in one interval: the union
/// of the cylinder and both cap spheres, cut by the clip half-spaces. From
/// inside, the exit point is returned.
pub fn ray_capsule(ray: &Ray, c: &Capsule) -> Option<CapsuleHit> {
    let spans = [
        cylinder_span(ray, c.v0, c.v1, c.r),
        sphere_span(ray, c.v0, c.r),
        sphere_span(ray, c.v1, c.r),
    ];
    let (mut lo, mut hi) = spans
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(l, h)| (a.min(l), b.max(h)));
    if lo > hi {
        return None;
    }
    // which surface bounds each end: 0 = capsule, 1 = plane at v0, 2 = plane at v1
    let (mut lo_src, mut hi_src) = (0, 0);
    let planes = [(c.n0, c.v0, true, 1), (c.n1, c.v1, false, 2)];
    for (n, v, above, src) in planes {
        let Some(n) = n else { continue };
        let (a, b) = half_line((ray.origin - v).dot(n), ray.dir.dot(n), 0.0, above)?;
        if a > lo {
            lo = a;
            lo_src = src;
        }
        if b < hi {
            hi = b;
            hi_src = src;
        }
    }
    if lo > hi {
        return None;
    }
    let (t, src) = if lo >= 0.0 {
        (lo, lo_src)
    } else if hi >= 0.0 {
        (hi, hi_src)
    } else {
        return None;
    };
    let normal = match src {
        1 => -c.n0.unwrap(),
        2 => c.n1.unwrap(),
        _ => {
            let p = ray.at(t);
            let d = c.delta();
            let len2 = d.length_squared();
            let h = if len2 > 0.0 { ((p - c.v0).dot(d) / len2).clamp(0.0, 1.0) } else { 0.0 };
            (p - (c.v0 + d * h)).try_normalize().unwrap_or(-ray.dir)
        }
    };
    Some(CapsuleHit { t, normal })
}

/// Componentwise absolute value of the normalized direction; mid-grey for zero.
pub fn tangent_color(d: DVec3) -> DVec3 {
    d.try_normalize().map_or(DVec3::splat(0.5), DVec3::abs)
}

/// Hit key for in-voxel sorting: quantized depth in the high 16 bits, fragment slot in the low 16.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PackedHit(pub u32);

impl PackedHit {
    pub fn quantize(t: f64, t_enter: f64, t_exit: f64) -> u32 {
        let span = t_exit - t_enter;
        if span.is_nan() || span <= 0.0 {
            return 0;
        }
        (65535.0 * (t - t_enter) / span).floor().clamp(0.0, 65535.0) as u32
    }

    pub fn new(t: f64, t_enter: f64, t_exit: f64, slot: u32) -> Self {
        debug_assert!(slot <= 0xffff);
        PackedHit((Self::quantize(t, t_enter, t_exit) << 16) | (slot & 0xffff))
    }

    pub fn depth(self) -> u32 {
        self.0 >> 16
    }

    pub fn slot(self) -> u32 {
        self.0 & 0xffff
    }
}

/// A voxel crossed by a ray, with the parameter interval it covers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelSpan {
    pub voxel: UVec3,
    pub t_enter: f64,
    pub t_exit: f64,
}

/// Front-to-back walk over the set voxels of a [`BitPyramid`], jumping over
/// the largest empty node containing the current position. Ties between axes
/// step x before y before z, like a plain DDA.
pub struct VoxelWalker<'a> {
    skip: &'a BitPyramid,
    ray: Ray,
    res: i32,
    cell: IVec3,
    t: f64,
    t_end: f64,
    done: bool,
}

impl<'a> VoxelWalker<'a> {
    /// `ray` in voxel units.
    pub fn new(skip: &'a BitPyramid, ray: Ray) -> Self {
        let res = skip.resolution() as i32;
        let mut walker = VoxelWalker {
            skip,
            ray,
            res,
            cell: IVec3::ZERO,
            t: 0.0,
            t_end: 0.0,
            done: true,
        };
        if let Some((cell, t0, t1)) = grid_entry(&ray, res) {
            walker.cell = cell;
            walker.t = t0;
            walker.t_end = t1;
            walker.done = false;
        }
        walker
    }

    /// Exit parameter and axis of the node of size `2^level` around the current cell.
    fn node_exit(&self, level: u32) -> (f64, usize, IVec3, IVec3) {
        let lo = (self.cell >> level) << level;
        let hi = lo + IVec3::splat(1 << level);
        let mut best = (f64::INFINITY, 0);
        for a in 0..3 {
            let d = self.ray.dir[a];
            let t = if d > 0.0 {
                (hi[a] as f64 - self.ray.origin[a]) / d
            } else if d < 0.0 {
                (lo[a] as f64 - self.ray.origin[a]) / d
            } else {
                continue;
            };
            if t < best.0 {
                best = (t, a);
            }
        }
        (best.0.max(self.t), best.1, lo, hi)
    }

    fn leave_node(&mut self, level: u32) -> f64 {
        let (t_next, axis, lo, hi) = self.node_exit(level);
        if t_next >= self.t_end || !t_next.is_finite() {
            self.done = true;
            return t_next.min(self.t_end);
        }
        let p = self.ray.at(t_next);
        let mut next = IVec3::ZERO;
        for a in 0..3 {
            next[a] = if a == axis {
                if self.ray.dir[a] > 0.0 {
                    hi[a]
                } else {
                    lo[a] - 1
                }
            } else {
                (p[a].floor() as i32).clamp(lo[a], hi[a] - 1)
            };
        }
        if next[axis] < 0 || next[axis] >= self.res {
            self.done = true;
        }
        self.cell = next;
        self.t = t_next;
        t_next
    }
}

impl Iterator for VoxelWalker<'_> {
    type Item = VoxelSpan;

    fn next(&mut self) -> Option<VoxelSpan> {
        while !self.done {
            let top = self.skip.levels() as u32;
            let c = self.cell.as_uvec3();
            match (0..top).rev().find(|&l| !self.skip.get(l as usize, c >> l)) {
                Some(level) => {
                    self.leave_node(level);
                }
                None => {
                    let t_enter = self.t;
                    let t_exit = self.leave_node(0);
                    return Some(VoxelSpan {
                        voxel: c,
                        t_enter,
                        t_exit,
                    });
                }
            }
        }
        None
    }
}

/// First cell, entry and exit parameters of the ray in the grid `[0, res]^3`.
fn grid_entry(ray: &Ray, res: i32) -> Option<(IVec3, f64, f64)> {
    let size = res as f64;
    let mut t_near = 0.0f64;
    let mut t_far = f64::INFINITY;
    let mut entry_axis = None;
    for a in 0..3 {
        let (o, d) = (ray.origin[a], ray.dir[a]);
        if d == 0.0 {
            if o < 0.0 || o >= size {
                return None;
            }
            continue;
        }
        let (t0, t1) = if d > 0.0 { (-o / d, (size - o) / d) } else { ((size - o) / d, -o / d) };
        if t0 > t_near {
            t_near = t0;
            entry_axis = Some(a);
        }
        t_far = t_far.min(t1);
    }
    if t_near >= t_far {
        return None;
    }
    let p = ray.at(t_near);
    let mut cell = IVec3::ZERO;
    for a in 0..3 {
        cell[a] = if Some(a) == entry_axis {
            if ray.dir[a] > 0.0 {
                0
            } else {
                res - 1
            }
        } else {
            (p[a].floor() as i32).clamp(0, res - 1)
        };
    }
    Some((cell, t_near, t_far))
}

/// First set voxel along a voxel-space ray and the parameter where the ray enters it.
pub fn first_voxel(skip: &BitPyramid, ray: &Ray) -> Option<(UVec3, f64)> {
    VoxelWalker::new(skip, *ray).next().map(|s| (s.voxel, s.t_enter))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderMode {
    Opaque,
    Transparent,
}

impl RenderMode {
    pub fn name(self) -> &'static str {
        match self {
            RenderMode::Opaque => "opaque",
            RenderMode::Transparent => "transparent",
        }
    }
}

impl FromStr for RenderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "opaque" => Ok(RenderMode::Opaque),
            "transparent" => Ok(RenderMode::Transparent),
            _ => Err(Error::Param(format!("unknown render mode '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSettings {
    pub mode: RenderMode,
    pub alpha: f64,
    pub k: usize,
    /// Linear RGB.
    pub background: DVec3,
    pub ambient: f64,
    pub diffuse: f64,
    /// Stop transparent rays once opacity reaches [`OPACITY_CUTOFF`].
    pub early_termination: bool,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            mode: RenderMode::Opaque,
            alpha: 1.0,
            k: 8,
            background: DVec3::splat(1.0),
            ambient: 0.4,
            diffuse: 0.6,
            early_termination: true,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Param(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(1..=64).contains(&self.k) {
            return Err(Error::Param(format!("k must lie in [1, 64], got {}", self.k)));
        }
        if !self.background.is_finite() || self.background.min_element() < 0.0 {
            return Err(Error::Param("background must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Everything the tracer reads, in voxel units of `grid`.
#[derive(Clone, Copy)]
pub struct Scene<'a> {
    pub grid: GridDesc,
    pub segments: &'a SegmentTable,
    pub abuffer: &'a ABuffer,
    /// Voxels worth visiting: the culling pyramid, or occupied voxels.
    pub skip: &'a BitPyramid,
    pub shading: &'a ShadingVolume,
}

impl Scene<'_> {
    /// Shaded colour of a hit at voxel-space point `p`.
    pub fn shade(&self, settings: &RenderSettings, segment: u32, p: DVec3, normal: DVec3) -> DVec3 {
        let (ao, shadow) = self.shading.sample(p);
        let n_dot_l = normal.dot(-self.shading.light_dir).max(0.0);
        tangent_color(self.segments.capsule(segment).delta()) * (settings.ambient * ao + settings.diffuse * shadow * n_dot_l)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraceCounters {
    pub voxels: u64,
    pub capsule_tests: u64,
    pub hits: u64,
    pub passes: u64,
}

impl std::ops::AddAssign for TraceCounters {
    fn add_assign(&mut self, o: Self) {
        self.voxels += o.voxels;
        self.capsule_tests += o.capsule_tests;
        self.hits += o.hits;
        self.passes += o.passes;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrimaryHit {
    pub segment: u32,
    /// Distance along the voxel-space ray.
    pub t: f64,
    pub color: DVec3,
}

/// Nearest hit in the first voxel that has one. Equal distances go to the lower segment id.
pub fn trace_opaque(
    ray: &Ray,
    scene: &Scene,
    settings: &RenderSettings,
    counters: &mut TraceCounters,
) -> Option<PrimaryHit> {
    for span in VoxelWalker::new(scene.skip, *ray) {
        counters.voxels += 1;
        let mut best: Option<(f64, u32, DVec3)> = None;
        for &seg in scene.abuffer.fragments_at_coord(span.voxel) {
            counters.capsule_tests += 1;
            let Some(hit) = ray_capsule(ray, scene.segments.capsule(seg)) else {
                continue;
            };
            if hit.t < span.t_enter || hit.t > span.t_exit {
                continue;
            }
            if best.is_none_or(|(t, s, _)| hit.t < t || (hit.t == t && seg < s)) {
                best = Some((hit.t, seg, hit.normal));
            }
        }
        if let Some((t, segment, normal)) = best {
            counters.hits += 1;
            return Some(PrimaryHit {
                segment,
                t,
                color: scene.shade(settings, segment, ray.at(t), normal),
            });
        }
    }
    None
}

/// Front-to-back compositing of every hit, `k` at a time per voxel.
///
/// Each pass keeps the `k` smallest packed keys above the previous pass's
/// last key; hits are assigned to the voxel whose `[t_enter, t_exit)` holds
/// them. Returns the colour composited over the background and the primary
/// hit segment.
pub fn trace_transparent(
    ray: &Ray,
    scene: &Scene,
    settings: &RenderSettings,
    counters: &mut TraceCounters,
) -> (DVec3, Option<u32>) {
    let alpha = settings.alpha;
    let k = settings.k;
    let mut color = DVec3::ZERO;
    let mut acc = 0.0f64;
    let mut primary = None;
    let mut kbuf: Vec<(PackedHit, f64, u32, DVec3)> = Vec::with_capacity(k + 1);
    'voxels: for span in VoxelWalker::new(scene.skip, *ray) {
        counters.voxels += 1;
        let frags = scene.abuffer.fragments_at_coord(span.voxel);
        let mut floor: Option<PackedHit> = None;
        loop {
            counters.passes += 1;
            kbuf.clear();
            let mut more = false;
            for (slot, &seg) in frags.iter().enumerate() {
                counters.capsule_tests += 1;
                let Some(hit) = ray_capsule(ray, scene.segments.capsule(seg)) else {
                    continue;
                };
                if hit.t < span.t_enter || hit.t >= span.t_exit {
                    continue;
                }
                let key = PackedHit::new(hit.t, span.t_enter, span.t_exit, slot as u32);
                if floor.is_some_and(|f| key <= f) {
                    continue;
                }
                let pos = kbuf.partition_point(|e| e.0 < key);
                if pos < k {
                    kbuf.insert(pos, (key, hit.t, seg, hit.normal));
                    if kbuf.len() > k {
                        kbuf.pop();
                        more = true;
                    }
                } else {
                    more = true;
                }
            }
            for &(_, t, seg, normal) in &kbuf {
                counters.hits += 1;
                primary.get_or_insert(seg);
                let c = scene.shade(settings, seg, ray.at(t), normal);
                color += (1.0 - acc) * alpha * c;
                acc += (1.0 - acc) * alpha;
                if settings.early_termination && acc >= OPACITY_CUTOFF {
                    break 'voxels;
                }
            }
            if !more {
                break;
            }
            floor = kbuf.last().map(|e| e.0);
        }
    }
    (color + (1.0 - acc) * settings.background, primary)
}

/// Linear RGB image with per-pixel primary hit ids and distances.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<[f32; 3]>,
    /// Segment id of the primary hit, -1 for a miss.
    pub hit_ids: Vec<i32>,
    /// World-space distance of the primary hit (opaque mode), infinity otherwise.
    pub depth: Vec<f64>,
}

pub fn srgb_encode(v: f64) -> u8 {
    let v = v.clamp(0.0, 1.0);
    let s = if v <= 0.003_130_8 { 12.92 * v } else { 1.055 * v.powf(1.0 / 2.4) - 0.055 };
    (s * 255.0).round() as u8
}

impl Image {
    pub fn srgb_bytes(&self) -> Vec<u8> {
        self.rgb.iter().flat_map(|c| c.map(|v| srgb_encode(v as f64))).collect()
    }

    /// Binary PPM (P6, maxval 255, sRGB).
    pub fn write_ppm<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.srgb_bytes())?;
        Ok(())
    }

    /// `HITI` dump: magic, u32 width, u32 height, i32 per pixel.
    pub fn write_hit_ids<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut bytes = Vec::with_capacity(12 + 4 * self.hit_ids.len());
        bytes.extend_from_slice(b"HITI");
        bytes.extend_from_slice(&self.width.to_le_bytes());
        bytes.extend_from_slice(&self.height.to_le_bytes());
        for id in &self.hit_ids {
            bytes.extend_from_slice(&id.to_le_bytes());
        }
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_hit_ids(bytes: &[u8]) -> Result<(u32, u32, Vec<i32>)> {
        if bytes.len() < 12 || &bytes[..4] != b"HITI" {
            return Err(Error::parse("byte 0", "bad magic, expected HITI"));
        }
        let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if bytes.len() != 12 + 4 * (w as usize * h as usize) {
            return Err(Error::parse("byte 12", "unexpected length"));
        }
        let ids = bytes[12..]
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((w, h, ids))
    }
}

/// Renders one frame on the current rayon pool. The output does not depend on the pool size.
pub fn render(scene: &Scene, cam: &Camera, settings: &RenderSettings) -> Result<(Image, TraceCounters)> {
    settings.validate()?;
    let (w, h) = (cam.width, cam.height);
    let pixels: Vec<([f32; 3], i32, f64, TraceCounters)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let ray = Ray::primary(cam, i % w, i / w).to_voxel_space(&scene.grid);
            let mut counters = TraceCounters::default();
            let (color, id, depth) = match settings.mode {
                RenderMode::Opaque => match trace_opaque(&ray, scene, settings, &mut counters) {
                    Some(hit) => (hit.color, hit.segment as i32, hit.t * scene.grid.voxel_size),
                    None => (settings.background, -1, f64::INFINITY),
                },
                RenderMode::Transparent => {
                    let (c, id) = trace_transparent(&ray, scene, settings, &mut counters);
                    (c, id.map_or(-1, |s| s as i32), f64::INFINITY)
                }
            };
            (color.as_vec3().to_array(), id, depth, counters)
        })
        .collect();
    let mut total = TraceCounters::default();
    let mut image = Image {
        width: w,
        height: h,
        rgb: Vec::with_capacity(pixels.len()),
        hit_ids: Vec::with_capacity(pixels.len()),
        depth: Vec::with_capacity(pixels.len()),
    };
    for (c, id, d, counters) in pixels {
        image.rgb.push(c);
        image.hit_ids.push(id);
        image.depth.push(d);
        total += counters;
    }
    Ok((image, total))
}
