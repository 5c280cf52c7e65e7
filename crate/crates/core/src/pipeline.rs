//! Stage orchestration: camera-independent geometry plus the per-camera frame stages.

use std::time::Instant;

use glam::DVec3;

use crate::abuffer::{build_vcsv, build_vss, build_vsv, ABuffer, Strategy};
use crate::culling::{compute_visibility, erode, BitPyramid, Camera, CullingPyramid};
use crate::error::{Error, Result};
use crate::lineset::{compute_clip_normals, LineSet};
use crate::raytracer::{render, Image, RenderMode, RenderSettings, Scene, TraceCounters};
use crate::shading::{compute_shading, ShadingVolume};
use crate::voxelizer::{voxelize, GridDesc, Method, OccupancyPyramid, SegmentTable, DEFAULT_R_MIN};

/// Default tube radius in voxels.
pub const DEFAULT_RADIUS_VOXELS: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineParams {
    pub resolution: u32,
    pub method: Method,
    /// Tube radius in voxels; `None` keeps the line set's world radius.
    pub radius_voxels: Option<f64>,
    pub r_min: f64,
    pub clip: bool,
    pub strategy: Strategy,
    /// Direction the light travels.
    pub light_dir: DVec3,
    pub settings: RenderSettings,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            resolution: 128,
            method: Method::Capsule,
            radius_voxels: Some(DEFAULT_RADIUS_VOXELS),
            r_min: DEFAULT_R_MIN,
            clip: true,
            strategy: Strategy::Vsv,
            light_dir: DVec3::new(-0.4, -0.3, -1.0),
            settings: RenderSettings::default(),
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        if !self.resolution.is_power_of_two() || !(2..=1024).contains(&self.resolution) {
            return Err(Error::Param(format!(
                "resolution must be a power of two in [2, 1024], got {}",
                self.resolution
            )));
        }
        if let Some(r) = self.radius_voxels {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Param(format!("radius must be positive, got {r}")));
            }
        }
        if !(self.r_min.is_finite() && self.r_min > 0.0) {
            return Err(Error::Param(format!("r_min must be positive, got {}", self.r_min)));
        }
        if self.light_dir.try_normalize().is_none() {
            return Err(Error::Param("light direction must be nonzero".into()));
        }
        if self.settings.mode == RenderMode::Transparent && self.strategy == Strategy::Vcsv {
            return Err(Error::Param(
                "the vcsv strategy culls occluded fragments and is only valid in opaque mode".into(),
            ));
        }
        self.settings.validate()
    }
}

/// Wall time per stage in milliseconds; zero for stages that did not run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimes {
    pub voxelize: f64,
    pub cull: f64,
    pub abuffer: f64,
    pub shade: f64,
    pub render: f64,
}

/// Camera-independent state: grid, capsules and the occupancy pyramid.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub grid: GridDesc,
    pub segments: SegmentTable,
    pub pyramid: OccupancyPyramid,
    pub method: Method,
    pub r_min: f64,
    pub voxelize_ms: f64,
}

impl Geometry {
    pub fn build(ls: &LineSet, params: &PipelineParams) -> Result<Self> {
        params.validate()?;
        let grid = match params.radius_voxels {
            Some(r) => GridDesc::fit(ls, params.resolution, r, true)?,
            None => GridDesc::fit(ls, params.resolution, ls.radius() as f64, false)?,
        };
        let segments = if params.clip {
            SegmentTable::new(ls, &compute_clip_normals(ls)?, &grid)
        } else {
            SegmentTable::unclipped(ls, &grid)
        };
        let segments = match params.radius_voxels {
            Some(r) => segments.with_radius(r),
            None => segments,
        };
        Ok(Self::from_segments(grid, segments, params.method, params.r_min))
    }

    /// Voxelizes voxel-space capsules on `grid`.
    pub fn from_segments(grid: GridDesc, segments: SegmentTable, method: Method, r_min: f64) -> Self {
        let start = Instant::now();
        let pyramid = voxelize(&segments, grid.resolution, method, r_min);
        Geometry {
            grid,
            segments,
            pyramid,
            method,
            r_min,
            voxelize_ms: start.elapsed().as_secs_f64() * 1e3,
        }
    }

    /// World-space centre of the grid.
    pub fn center(&self) -> DVec3 {
        (self.grid.world_min + self.grid.world_max()) * 0.5
    }

    /// World-space edge length of the grid.
    pub fn extent(&self) -> f64 {
        self.grid.resolution as f64 * self.grid.voxel_size
    }
}

/// Outputs of the view-dependent stages for one camera.
#[derive(Clone, Debug)]
pub struct Frame {
    pub culling: Option<CullingPyramid>,
    pub abuffer: ABuffer,
    pub shading: ShadingVolume,
    pub image: Image,
    pub counters: TraceCounters,
    pub times: StageTimes,
}

impl Frame {
    /// Fraction of occupied voxels rejected by culling; zero without culling.
    pub fn culled_fraction(&self, geometry: &Geometry) -> f64 {
        let Some(c) = &self.culling else { return 0.0 };
        let occupied = geometry.pyramid.base().iter().filter(|w| w.count() > 0).count();
        if occupied == 0 {
            return 0.0;
        }
        1.0 - c.count_set() as f64 / occupied as f64
    }
}

/// Culling (opaque + VCSV only), A-buffer, shading and ray tracing for `cam`,
/// on the current rayon pool.
pub fn render_frame(geometry: &Geometry, cam: &Camera, params: &PipelineParams) -> Result<Frame> {
    params.validate()?;
    let res = geometry.grid.resolution;
    let mut times = StageTimes {
        voxelize: geometry.voxelize_ms,
        ..StageTimes::default()
    };

    let mut clock = Instant::now();
    let mut lap = |slot: &mut f64| {
        *slot = clock.elapsed().as_secs_f64() * 1e3;
        clock = Instant::now();
    };

    let culling = (params.strategy == Strategy::Vcsv).then(|| {
        let eroded = erode(&geometry.pyramid.clamped_field(), res);
        compute_visibility(&eroded, &geometry.pyramid, &geometry.grid, cam)
    });
    lap(&mut times.cull);

    let abuffer = match (params.strategy, &culling) {
        (Strategy::Vcsv, Some(c)) => build_vcsv(&geometry.segments, &geometry.pyramid, c, geometry.method, geometry.r_min)?,
        (Strategy::Vss, _) => build_vss(&geometry.segments, res, geometry.method, geometry.r_min)?,
        _ => build_vsv(&geometry.segments, &geometry.pyramid, geometry.method, geometry.r_min)?,
    };
    lap(&mut times.abuffer);

    let occupied;
    let skip: &BitPyramid = match &culling {
        Some(c) => c,
        None => {
            occupied = BitPyramid::occupied(&geometry.pyramid);
            &occupied
        }
    };
    let shading = compute_shading(&geometry.pyramid, skip, params.light_dir);
    lap(&mut times.shade);

    let scene = Scene {
        grid: geometry.grid,
        segments: &geometry.segments,
        abuffer: &abuffer,
        skip,
        shading: &shading,
    };
    let (image, counters) = render(&scene, cam, &params.settings)?;
    lap(&mut times.render);

    Ok(Frame {
        culling,
        abuffer,
        shading,
        image,
        counters,
        times,
    })
}

/// Runs `f` on a dedicated pool of `workers` threads; 0 uses the global pool.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Param(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Camera looking at the grid centre from `distance` grid extents away.
pub fn orbit_camera(
    geometry: &Geometry,
    azimuth: f64,
    elevation: f64,
    distance: f64,
    width: u32,
    height: u32,
) -> Result<Camera> {
    Camera::orbit(
        geometry.center(),
        distance * geometry.extent(),
        azimuth,
        elevation,
        0.7,
        width,
        height,
    )
}
