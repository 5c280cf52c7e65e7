//! Camera model, eroded-occupancy visibility and the binary culling pyramid.

use std::io::Write;

use glam::{DVec3, UVec3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::voxelizer::{traverse_dda_until, voxel_center, voxel_coord, voxel_index, GridDesc, OccupancyPyramid};

/// Eroded occupancy at or above this value blocks a visibility ray.
pub const BLOCK_THRESHOLD: f64 = 0.999;

/// Pinhole camera in world space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub position: DVec3,
    pub forward: DVec3,
    pub up: DVec3,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    /// Normalizes `forward` and re-orthogonalizes `up` against it.
    pub fn new(position: DVec3, forward: DVec3, up: DVec3, fov_y: f64, width: u32, height: u32) -> Result<Self> {
        if !position.is_finite() || !forward.is_finite() || !up.is_finite() {
            return Err(Error::Param("camera vectors must be finite".into()));
        }
        let f = forward.try_normalize().ok_or_else(|| Error::Param("camera forward is zero".into()))?;
        let u = (up - f * up.dot(f))
            .try_normalize()
            .ok_or_else(|| Error::Param("camera up is parallel to forward".into()))?;
        if !(fov_y > 0.0 && fov_y < std::f64::consts::PI) {
            return Err(Error::Param(format!("fov must lie in (0, pi), got {fov_y}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Param("image size must be nonzero".into()));
        }
        Ok(Camera {
            position,
            forward: f,
            up: u,
            fov_y,
            width,
            height,
        })
    }

    pub fn look_at(position: DVec3, target: DVec3, up: DVec3, fov_y: f64, width: u32, height: u32) -> Result<Self> {
        Self::new(position, target - position, up, fov_y, width, height)
    }

    /// Camera on a sphere around `target`; z is up, azimuth measured from +x.
    pub fn orbit(
        target: DVec3,
        distance: f64,
        azimuth: f64,
        elevation: f64,
        fov_y: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let dir = DVec3::new(
            elevation.cos() * azimuth.cos(),
            elevation.cos() * azimuth.sin(),
            elevation.sin(),
        );
        Self::look_at(target + dir * distance, target, DVec3::Z, fov_y, width, height)
    }

    pub fn right(&self) -> DVec3 {
        self.forward.cross(self.up)
    }

    /// Unit direction through the centre of pixel `(x, y)`; row 0 is the top of the image.
    pub fn pixel_direction(&self, x: u32, y: u32) -> DVec3 {
        let tan = (self.fov_y * 0.5).tan();
        let aspect = self.width as f64 / self.height as f64;
        let sx = ((x as f64 + 0.5) / self.width as f64 * 2.0 - 1.0) * tan * aspect;
        let sy = (1.0 - (y as f64 + 0.5) / self.height as f64 * 2.0) * tan;
        (self.forward + self.right() * sx + self.up * sy).normalize()
    }
}

/// Binary mip hierarchy; each parent is the OR of its 8 children.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitPyramid {
    resolution: u32,
    levels: Vec<Vec<bool>>,
}

/// Camera visibility per voxel.
pub type CullingPyramid = BitPyramid;

impl BitPyramid {
    pub fn from_base(resolution: u32, base: Vec<bool>) -> Self {
        assert_eq!(base.len(), (resolution as usize).pow(3));
        let mut levels = vec![base];
        let mut n = resolution as usize;
        while n > 1 {
            let half = n / 2;
            let prev = levels.last().unwrap();
            let next: Vec<bool> = (0..half * half * half)
                .into_par_iter()
                .map(|i| {
                    let (x, y, z) = (i % half, i / half % half, i / (half * half));
                    (0..8).any(|c| {
                        let (dx, dy, dz) = (c & 1, (c >> 1) & 1, c >> 2);
                        prev[(2 * x + dx) + n * ((2 * y + dy) + n * (2 * z + dz))]
                    })
                })
                .collect();
            levels.push(next);
            n = half;
        }
        BitPyramid { resolution, levels }
    }

    /// Every voxel set.
    pub fn full(resolution: u32) -> Self {
        Self::from_base(resolution, vec![true; (resolution as usize).pow(3)])
    }

    /// Voxels holding at least one primitive.
    pub fn occupied(pyramid: &OccupancyPyramid) -> Self {
        Self::from_base(pyramid.resolution(), pyramid.base().iter().map(|w| w.count() > 0).collect())
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, level: usize) -> &[bool] {
        &self.levels[level]
    }

    pub fn base(&self) -> &[bool] {
        &self.levels[0]
    }

    pub fn level_resolution(&self, level: usize) -> u32 {
        self.resolution >> level
    }

    pub fn get(&self, level: usize, c: UVec3) -> bool {
        self.levels[level][voxel_index(self.level_resolution(level), c)]
    }

    pub fn is_set(&self, index: usize) -> bool {
        self.levels[0][index]
    }

    pub fn count_set(&self) -> usize {
        self.levels[0].iter().filter(|&&b| b).count()
    }

    /// Whether any base voxel in the inclusive box `[lo, hi]` is set, descending from the root
    /// and stopping at the first set base voxel.
    pub fn any_in_box(&self, lo: UVec3, hi: UVec3) -> bool {
        self.any_in_box_at(self.levels.len() - 1, UVec3::ZERO, lo, hi)
    }

    fn any_in_box_at(&self, level: usize, node: UVec3, lo: UVec3, hi: UVec3) -> bool {
        if !self.get(level, node) {
            return false;
        }
        if level == 0 {
            return true;
        }
        let child_level = level - 1;
        for c in 0..8u32 {
            let child = node * 2 + UVec3::new(c & 1, (c >> 1) & 1, c >> 2);
            let span = 1u32 << child_level;
            let cmin = child * span;
            let cmax = cmin + UVec3::splat(span - 1);
            if cmax.cmpge(lo).all() && cmin.cmple(hi).all() && self.any_in_box_at(child_level, child, lo, hi) {
                return true;
            }
        }
        false
    }

    /// `CULP` dump: magic, u32 resolution, then one byte per texel for the base and each mip.
    pub fn write_dump<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(b"CULP")?;
        out.write_all(&self.resolution.to_le_bytes())?;
        for level in &self.levels {
            let bytes: Vec<u8> = level.iter().map(|&b| b as u8).collect();
            out.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn read_dump(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != b"CULP" {
            return Err(Error::parse("byte 0", "bad magic, expected CULP"));
        }
        let res = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if !res.is_power_of_two() || res > 1024 {
            return Err(Error::parse("byte 4", "resolution must be a power of two"));
        }
        let n = (res as usize).pow(3);
        if bytes.len() < 8 + n {
            return Err(Error::parse("base level", "truncated"));
        }
        let pyramid = Self::from_base(res, bytes[8..8 + n].iter().map(|&b| b != 0).collect());
        let mut expected = Vec::with_capacity(bytes.len());
        pyramid.write_dump(&mut expected)?;
        if expected != bytes {
            return Err(Error::parse("mip chain", "levels inconsistent with the base"));
        }
        Ok(pyramid)
    }
}

/// Minimum of each voxel and its 6 neighbours; voxels outside the grid count as 0.
pub fn erode(field: &[f64], resolution: u32) -> Vec<f64> {
    let n = resolution as i64;
    assert_eq!(field.len(), (n * n * n) as usize);
    (0..field.len())
        .into_par_iter()
        .map(|i| {
            let c = voxel_coord(resolution, i);
            let c = [c.x as i64, c.y as i64, c.z as i64];
            let mut m = field[i].clamp(0.0, 1.0);
            for axis in 0..3 {
                for delta in [-1i64, 1] {
                    let mut q = c;
                    q[axis] += delta;
                    if q[axis] < 0 || q[axis] >= n {
                        return 0.0;
                    }
                    m = m.min(field[(q[0] + n * (q[1] + n * q[2])) as usize].clamp(0.0, 1.0));
                }
            }
            m
        })
        .collect()
}

/// Marks every occupied voxel (count > 0) whose straight path to the camera
/// crosses no eroded voxel at or above [`BLOCK_THRESHOLD`]. The start voxel
/// and the voxel containing the camera never block.
pub fn compute_visibility(eroded: &[f64], pyramid: &OccupancyPyramid, grid: &GridDesc, cam: &Camera) -> CullingPyramid {
    let res = grid.resolution;
    assert_eq!(eroded.len(), grid.voxel_count());
    assert_eq!(pyramid.resolution(), res);
    let eye = grid.to_voxel(cam.position);
    let base: Vec<bool> = (0..eroded.len())
        .into_par_iter()
        .map(|i| pyramid.count(i) > 0 && voxel_sees(eroded, res, voxel_coord(res, i), eye))
        .collect();
    BitPyramid::from_base(res, base)
}

fn voxel_sees(eroded: &[f64], res: u32, v: UVec3, eye: DVec3) -> bool {
    let start = voxel_center(v);
    let end = clip_to_grid_exit(start, eye, res as f64);
    let eye_cell = eye.floor();
    let mut first = true;
    let mut visible = true;
    traverse_dda_until(start, end, res, |c| {
        if first {
            first = false;
            return true;
        }
        if c.as_dvec3() == eye_cell {
            return false;
        }
        if eroded[voxel_index(res, c)] >= BLOCK_THRESHOLD {
            visible = false;
            return false;
        }
        true
    });
    visible
}

/// Shortens `start → eye` so it ends at most half a voxel past the grid boundary.
/// `start` lies inside the grid, so the clipped end is outside whenever `eye` is.
fn clip_to_grid_exit(start: DVec3, eye: DVec3, size: f64) -> DVec3 {
    let d = eye - start;
    let len = d.length();
    if len == 0.0 {
        return eye;
    }
    let mut t_exit = f64::INFINITY;
    for a in 0..3 {
        if d[a] > 0.0 {
            t_exit = t_exit.min((size - start[a]) / d[a]);
        } else if d[a] < 0.0 {
            t_exit = t_exit.min(-start[a] / d[a]);
        }
    }
    let t = (t_exit + 0.5 / len).min(1.0);
    start + d * t
}
