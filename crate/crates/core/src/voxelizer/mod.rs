//! Voxelization of capsule line sets into the packed occupancy pyramid.

mod sdf;
mod traverse;

use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use glam::{DVec3, UVec3};
use rayon::prelude::*;

pub use sdf::{capsule_occupancy, clipped_capsule_sdf};
pub use traverse::{
    capsule_voxel_bounds, projected_radii, rank_axes, slice_radii, traverse_aabb,
    traverse_capsule, traverse_dda, traverse_dda_until, AxisRank,
};

use crate::error::{Error, Result};
use crate::lineset::{Capsule, ClipNormals, LineSet};

/// Default minimum tube radius for occupancy estimation, in voxels.
pub const DEFAULT_R_MIN: f64 = 0.5;

/// Cubic voxel grid over a world-space box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridDesc {
    pub resolution: u32,
    pub world_min: DVec3,
    pub voxel_size: f64,
}

impl GridDesc {
    pub fn new(resolution: u32, world_min: DVec3, voxel_size: f64) -> Result<Self> {
        if !resolution.is_power_of_two() || !(2..=1024).contains(&resolution) {
            return Err(Error::Param(format!(
                "resolution must be a power of two in [2, 1024], got {resolution}"
            )));
        }
        if !(voxel_size.is_finite() && voxel_size > 0.0) {
            return Err(Error::Param(format!("voxel size must be positive, got {voxel_size}")));
        }
        Ok(GridDesc {
            resolution,
            world_min,
            voxel_size,
        })
    }

    /// Unit voxels with the grid origin at world zero.
    pub fn unit(resolution: u32) -> Result<Self> {
        Self::new(resolution, DVec3::ZERO, 1.0)
    }

    /// Cube around the vertex bounds, padded by the tube radius plus one voxel
    /// on every side. The radius is taken in voxel units when
    /// `radius_in_voxels` is set, otherwise in world units.
    pub fn fit(ls: &LineSet, resolution: u32, radius: f64, radius_in_voxels: bool) -> Result<Self> {
        let (lo, hi) = ls
            .bounds()
            .unwrap_or((DVec3::ZERO, DVec3::ONE));
        let extent = (hi - lo).max_element().max(1e-6);
        let res = resolution as f64;
        let voxel_size = if radius_in_voxels {
            let usable = res - 2.0 * (radius + 1.0);
            if usable <= 0.0 {
                return Err(Error::Param(format!(
                    "radius {radius} voxels does not fit a {resolution}^3 grid"
                )));
            }
            extent / usable
        } else {
            (extent + 2.0 * radius) / (res - 2.0)
        };
        let center = (lo + hi) * 0.5;
        Self::new(resolution, center - DVec3::splat(0.5 * res * voxel_size), voxel_size)
    }

    pub fn world_max(&self) -> DVec3 {
        self.world_min + DVec3::splat(self.resolution as f64 * self.voxel_size)
    }

    pub fn to_voxel(&self, p: DVec3) -> DVec3 {
        (p - self.world_min) / self.voxel_size
    }

    pub fn to_world(&self, p: DVec3) -> DVec3 {
        self.world_min + p * self.voxel_size
    }

    pub fn voxel_count(&self) -> usize {
        (self.resolution as usize).pow(3)
    }

    pub fn index(&self, c: UVec3) -> usize {
        voxel_index(self.resolution, c)
    }
}

pub fn voxel_index(resolution: u32, c: UVec3) -> usize {
    let n = resolution as usize;
    c.x as usize + n * (c.y as usize + n * c.z as usize)
}

pub fn voxel_coord(resolution: u32, index: usize) -> UVec3 {
    let n = resolution as usize;
    UVec3::new((index % n) as u32, (index / n % n) as u32, (index / (n * n)) as u32)
}

pub fn voxel_center(c: UVec3) -> DVec3 {
    c.as_dvec3() + DVec3::splat(0.5)
}

/// Capsules of a line set in voxel units, indexed by segment start vertex.
///
/// Entries whose start vertex ends a polyline are placeholders and are never
/// referenced through [`SegmentTable::ids`].
#[derive(Clone, Debug)]
pub struct SegmentTable {
    capsules: Vec<Capsule>,
    ids: Vec<u32>,
}

impl SegmentTable {
    /// Capsules clipped at interior vertices; polyline ends keep round caps.
    pub fn new(ls: &LineSet, cn: &ClipNormals, grid: &GridDesc) -> Self {
        Self::build(ls, Some(cn), grid)
    }

    /// Plain capsules, overlapping at every interior vertex.
    pub fn unclipped(ls: &LineSet, grid: &GridDesc) -> Self {
        Self::build(ls, None, grid)
    }

    fn build(ls: &LineSet, cn: Option<&ClipNormals>, grid: &GridDesc) -> Self {
        let r = ls.radius() as f64 / grid.voxel_size;
        let verts: Vec<DVec3> = ls
            .vertices()
            .iter()
            .map(|v| grid.to_voxel(v.as_dvec3()))
            .collect();
        let mut capsules = vec![Capsule::new(DVec3::ZERO, DVec3::ZERO, r); verts.len().saturating_sub(1)];
        let ids: Vec<u32> = ls.segment_indices().collect();
        for &i in &ids {
            let i = i as usize;
            let mut c = Capsule::new(verts[i], verts[i + 1], r);
            if let Some(cn) = cn {
                if !ls.is_polyline_start(i) {
                    c.n0 = Some(cn.normals[i]);
                }
                if !ls.is_polyline_end(i + 1) {
                    c.n1 = Some(cn.normals[i + 1]);
                }
            }
            capsules[i] = c;
        }
        SegmentTable { capsules, ids }
    }

    /// Builds a table directly from voxel-space capsules; ids are `0..n`.
    pub fn from_capsules(capsules: Vec<Capsule>) -> Self {
        let ids = (0..capsules.len() as u32).collect();
        SegmentTable { capsules, ids }
    }

    /// Same table with every capsule radius replaced by `r` voxels.
    pub fn with_radius(mut self, r: f64) -> Self {
        for c in &mut self.capsules {
            c.r = r;
        }
        self
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn capsule(&self, id: u32) -> &Capsule {
        &self.capsules[id as usize]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &Capsule)> + '_ {
        self.ids.iter().map(move |&i| (i, &self.capsules[i as usize]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Dda,
    Capsule,
    Aabb,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Dda, Method::Capsule, Method::Aabb];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dda => "dda",
            Method::Capsule => "capsule",
            Method::Aabb => "aabb",
        }
    }

    /// Calls `visit` for every voxel this method assigns to `c`.
    pub fn traverse(self, c: &Capsule, resolution: u32, visit: impl FnMut(UVec3)) {
        match self {
            Method::Dda => traverse_dda(c.v0, c.v1, resolution, visit),
            Method::Capsule => traverse_capsule(c, resolution, visit),
            Method::Aabb => traverse_aabb(c, resolution, visit),
        }
    }

    /// Traversal used when accumulating occupancy and fragments. The tube is
    /// widened to `r_min` exactly as the occupancy estimate widens it, so every
    /// voxel centre with nonzero occupancy is visited.
    pub fn traverse_clamped(self, c: &Capsule, resolution: u32, r_min: f64, visit: impl FnMut(UVec3)) {
        if c.r < r_min {
            self.traverse(&c.with_radius(r_min), resolution, visit)
        } else {
            self.traverse(c, resolution, visit)
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dda" => Ok(Method::Dda),
            "capsule" => Ok(Method::Capsule),
            "aabb" => Ok(Method::Aabb),
            _ => Err(Error::Param(format!("unknown voxelization method '{s}'"))),
        }
    }
}

/// Fixed-point scale of the occupancy field: 1.0 occupancy = 4096.
pub const OCCUPANCY_SCALE: f64 = 4096.0;

/// Primitive count (high 16 bits) and fixed-point occupancy sum (low 16 bits).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PackedVoxel(pub u32);

impl PackedVoxel {
    pub fn encode(count: u32, occupancy: f64) -> Self {
        let occ = (occupancy * OCCUPANCY_SCALE).round().clamp(0.0, 65535.0) as u32;
        PackedVoxel(count.min(0xFFFF) << 16 | occ)
    }

    pub fn count(self) -> u32 {
        self.0 >> 16
    }

    pub fn occupancy_fixed(self) -> u32 {
        self.0 & 0xFFFF
    }

    pub fn occupancy(self) -> f64 {
        self.occupancy_fixed() as f64 / OCCUPANCY_SCALE
    }

    pub fn decode(self) -> (u32, f64) {
        (self.count(), self.occupancy())
    }

    /// Adds one primitive with `occupancy_fixed` to the word, saturating each
    /// field at 16 bits. Returns true when either field saturated.
    ///
    /// Saturating addition of non-negative deltas commutes, so the final word
    /// is independent of update order.
    pub fn atomic_add(word: &AtomicU32, occupancy_fixed: u32) -> bool {
        let mut saturated = false;
        word.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |w| {
            let count = (w >> 16) + 1;
            let occ = (w & 0xFFFF) + occupancy_fixed;
            saturated = count > 0xFFFF || occ > 0xFFFF;
            Some(count.min(0xFFFF) << 16 | occ.min(0xFFFF))
        })
        .ok();
        saturated
    }
}

pub fn occupancy_to_fixed(occupancy: f64) -> u32 {
    (occupancy * OCCUPANCY_SCALE).round().clamp(0.0, 65535.0) as u32
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VoxelizeStats {
    /// Capsule-voxel incidences, i.e. packed-word updates.
    pub visits: u64,
    /// Updates that hit a saturated field.
    pub saturated: u64,
}

/// Base level of packed words plus a chain of averaged occupancy mips.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyPyramid {
    resolution: u32,
    base: Vec<PackedVoxel>,
    /// `mips[0]` is the clamped base occupancy; each next level halves the resolution.
    mips: Vec<Vec<f32>>,
    pub stats: VoxelizeStats,
}

impl OccupancyPyramid {
    pub fn from_base(resolution: u32, base: Vec<PackedVoxel>) -> Self {
        assert_eq!(base.len(), (resolution as usize).pow(3));
        let mips = build_mips(&base, resolution);
        OccupancyPyramid {
            resolution,
            base,
            mips,
            stats: VoxelizeStats::default(),
        }
    }

    /// Pyramid over a float occupancy field; every voxel with positive occupancy counts one primitive.
    pub fn from_occupancy(resolution: u32, occupancy: &[f64]) -> Self {
        let base = occupancy
            .iter()
            .map(|&o| PackedVoxel::encode(u32::from(o > 0.0), o))
            .collect();
        Self::from_base(resolution, base)
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn base(&self) -> &[PackedVoxel] {
        &self.base
    }

    pub fn mips(&self) -> &[Vec<f32>] {
        &self.mips
    }

    pub fn levels(&self) -> usize {
        self.mips.len()
    }

    pub fn count(&self, index: usize) -> u32 {
        self.base[index].count()
    }

    /// Occupancy clamped to [0, 1].
    pub fn clamped(&self, index: usize) -> f64 {
        self.base[index].occupancy().min(1.0)
    }

    pub fn clamped_field(&self) -> Vec<f64> {
        self.base.iter().map(|w| w.occupancy().min(1.0)).collect()
    }

    pub fn total_occupancy(&self) -> f64 {
        self.base.iter().map(|w| w.occupancy()).sum()
    }

    pub fn total_count(&self) -> u64 {
        self.base.iter().map(|w| w.count() as u64).sum()
    }

    /// Mip texel, zero outside the level.
    pub fn texel(&self, level: usize, c: [i64; 3]) -> f64 {
        let n = (self.resolution >> level) as i64;
        if c.iter().any(|&v| v < 0 || v >= n) {
            return 0.0;
        }
        let n = n as usize;
        self.mips[level][c[0] as usize + n * (c[1] as usize + n * c[2] as usize)] as f64
    }

    /// Trilinear sample of mip `level` at `p` in base voxel units, zero border.
    pub fn sample(&self, level: usize, p: DVec3) -> f64 {
        let scale = (1u64 << level) as f64;
        let q = p / scale - DVec3::splat(0.5);
        let base = q.floor();
        let f = q - base;
        let b = [base.x as i64, base.y as i64, base.z as i64];
        let mut acc = 0.0;
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let w = (0..3)
                .map(|a| if o[a] == 1 { f[a] } else { 1.0 - f[a] })
                .product::<f64>();
            if w > 0.0 {
                acc += w * self.texel(level, [b[0] + o[0] as i64, b[1] + o[1] as i64, b[2] + o[2] as i64]);
            }
        }
        acc
    }

    /// Sample at a fractional level, interpolating between the two nearest mips.
    pub fn sample_lod(&self, level: f64, p: DVec3) -> f64 {
        let max = (self.levels() - 1) as f64;
        let level = level.clamp(0.0, max);
        let lo = level.floor();
        let frac = level - lo;
        let a = self.sample(lo as usize, p);
        if frac > 0.0 {
            a * (1.0 - frac) + self.sample(lo as usize + 1, p) * frac
        } else {
            a
        }
    }

    /// `VOXP` dump: magic, u32 resolution, base words (x fastest), then every mip level as f32.
    pub fn write_dump<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(b"VOXP")?;
        out.write_all(&self.resolution.to_le_bytes())?;
        for w in &self.base {
            out.write_all(&w.0.to_le_bytes())?;
        }
        for level in &self.mips {
            for v in level {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_dump(bytes: &[u8]) -> Result<Self> {
        let mut words = bytes.chunks_exact(4);
        let magic = words.next().ok_or_else(|| Error::parse("byte 0", "truncated"))?;
        if magic != b"VOXP" {
            return Err(Error::parse("byte 0", "bad magic, expected VOXP"));
        }
        let res = u32::from_le_bytes(
            words
                .next()
                .ok_or_else(|| Error::parse("byte 4", "truncated"))?
                .try_into()
                .unwrap(),
        );
        if !res.is_power_of_two() {
            return Err(Error::parse("byte 4", "resolution must be a power of two"));
        }
        let n = (res as usize).pow(3);
        let base: Vec<PackedVoxel> = words
            .by_ref()
            .take(n)
            .map(|w| PackedVoxel(u32::from_le_bytes(w.try_into().unwrap())))
            .collect();
        if base.len() != n {
            return Err(Error::parse("base level", "truncated"));
        }
        let pyramid = Self::from_base(res, base);
        let expected: usize = pyramid.mips.iter().map(Vec::len).sum();
        if bytes.len() != 8 + 4 * n + 4 * expected {
            return Err(Error::parse("mip chain", "unexpected length"));
        }
        Ok(pyramid)
    }
}

/// Averaging mip chain over the clamped base occupancy, down to a single texel.
pub fn build_mips(base: &[PackedVoxel], resolution: u32) -> Vec<Vec<f32>> {
    let mut current: Vec<f64> = base.iter().map(|w| w.occupancy().min(1.0)).collect();
    let mut n = resolution as usize;
    let mut mips = vec![current.iter().map(|&v| v as f32).collect::<Vec<f32>>()];
    while n > 1 {
        let half = n / 2;
        let prev = &current;
        let next: Vec<f64> = (0..half * half * half)
            .into_par_iter()
            .map(|i| {
                let (x, y, z) = (i % half, i / half % half, i / (half * half));
                let mut sum = 0.0;
                for dz in 0..2 {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            sum += prev[(2 * x + dx) + n * ((2 * y + dy) + n * (2 * z + dz))];
                        }
                    }
                }
                sum / 8.0
            })
            .collect();
        mips.push(next.iter().map(|&v| v as f32).collect());
        current = next;
        n = half;
    }
    mips
}

/// Accumulates every segment's occupancy into a fresh pyramid using the
/// current rayon pool. The base level is bit-identical for any worker count
/// and segment order.
pub fn voxelize(segments: &SegmentTable, resolution: u32, method: Method, r_min: f64) -> OccupancyPyramid {
    let n = (resolution as usize).pow(3);
    let words: Vec<AtomicU32> = (0..n).map(|_| AtomicU32::new(0)).collect();
    let visits = AtomicU64::new(0);
    let saturated = AtomicU64::new(0);
    segments.ids().par_iter().for_each(|&id| {
        let c = segments.capsule(id);
        let mut local_visits = 0u64;
        let mut local_saturated = 0u64;
        method.traverse_clamped(c, resolution, r_min, |v| {
            let occ = capsule_occupancy(voxel_center(v), c, r_min);
            if PackedVoxel::atomic_add(&words[voxel_index(resolution, v)], occupancy_to_fixed(occ)) {
                local_saturated += 1;
            }
            local_visits += 1;
        });
        visits.fetch_add(local_visits, Ordering::Relaxed);
        saturated.fetch_add(local_saturated, Ordering::Relaxed);
    });
    let base = words.into_iter().map(|w| PackedVoxel(w.into_inner())).collect();
    let mut pyramid = OccupancyPyramid::from_base(resolution, base);
    pyramid.stats = VoxelizeStats {
        visits: visits.into_inner(),
        saturated: saturated.into_inner(),
    };
    pyramid
}

/// Convenience wrapper: clip normals are applied, geometry converted to voxel units of `grid`.
pub fn voxelize_lineset(
    ls: &LineSet,
    cn: &ClipNormals,
    grid: &GridDesc,
    method: Method,
    r_min: f64,
) -> OccupancyPyramid {
    voxelize(&SegmentTable::new(ls, cn, grid), grid.resolution, method, r_min)
}
