//! A loaded scene plus the configuration that renders it; shared by the
//! `render` command and the service.

use serde::Serialize;
use voxline_core::abuffer::Strategy;
use voxline_core::culling::Camera;
use voxline_core::lineset::LineSet;
use voxline_core::pipeline::{render_frame, with_workers, Frame, Geometry};
use voxline_core::raytracer::RenderMode;

use crate::config::Config;
use crate::error::{Error, Result, StageExt};

/// Keys whose change invalidates the voxelized geometry.
const GEOMETRY_KEYS: &[&str] = &["input", "seed", "res", "method", "radius", "r_min", "clip"];

/// Keys a running service refuses to change.
const FIXED_KEYS: &[&str] = &["out", "port", "experiments", "bench_res", "bench_decimate", "bench_alpha"];

pub struct Session {
    config: Config,
    lineset: LineSet,
    geometry: Geometry,
}

/// Per-frame counters and stage times, written to the stats file and the frame header.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameStats {
    pub segments: usize,
    pub resolution: u32,
    pub method: &'static str,
    pub strategy: &'static str,
    pub mode: &'static str,
    pub alpha: f64,
    pub k: usize,
    pub width: u32,
    pub height: u32,
    pub voxels_visited: u64,
    pub fragments: usize,
    pub incidences: u64,
    pub touches: u64,
    pub segments_culled: u64,
    pub culled_fraction: f64,
    pub ray_voxels: u64,
    pub capsule_tests: u64,
    pub hits: u64,
    pub passes: u64,
    pub voxelize_ms: f64,
    pub cull_ms: f64,
    pub abuffer_ms: f64,
    pub shade_ms: f64,
    pub render_ms: f64,
}

impl Session {
    /// Validates `config`, loads the scene and voxelizes it.
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        let lineset = config.input.load(config.seed)?;
        let geometry = build(&config, &lineset)?;
        Ok(Session {
            config,
            lineset,
            geometry,
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn lineset(&self) -> &LineSet {
        &self.lineset
    }

    /// Orbit camera from the configured azimuth, elevation and distance.
    pub fn orbit_camera(&self) -> Result<Camera> {
        let c = &self.config;
        Camera::orbit(
            self.geometry.center(),
            c.distance * self.geometry.extent(),
            c.azimuth,
            c.elevation,
            c.fov,
            c.width,
            c.height,
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    /// Runs the view-dependent stages for `cam`, re-voxelizing first when configured to.
    pub fn render(&mut self, cam: &Camera) -> Result<Frame> {
        if self.config.revoxelize {
            self.geometry = build(&self.config, &self.lineset)?;
        }
        let params = self.config.params();
        let geometry = &self.geometry;
        with_workers(self.config.workers, || render_frame(geometry, cam, &params))
            .stage("workers")?
            .stage("frame")
    }

    pub fn stats(&self, frame: &Frame) -> FrameStats {
        let c = &self.config;
        let g = &self.geometry;
        FrameStats {
            segments: g.segments.len(),
            resolution: g.grid.resolution,
            method: g.method.name(),
            strategy: c.strategy.name(),
            mode: c.mode.name(),
            alpha: c.alpha,
            k: c.k,
            width: frame.image.width,
            height: frame.image.height,
            voxels_visited: g.pyramid.stats.visits,
            fragments: frame.abuffer.fragment_total(),
            incidences: frame.abuffer.stats.incidences,
            touches: frame.abuffer.stats.touches(),
            segments_culled: frame.abuffer.stats.segments_culled,
            culled_fraction: frame.culled_fraction(g),
            ray_voxels: frame.counters.voxels,
            capsule_tests: frame.counters.capsule_tests,
            hits: frame.counters.hits,
            passes: frame.counters.passes,
            voxelize_ms: frame.times.voxelize,
            cull_ms: frame.times.cull,
            abuffer_ms: frame.times.abuffer,
            shade_ms: frame.times.shade,
            render_ms: frame.times.render,
        }
    }

    /// Applies a runtime setting change. The session is unchanged on error.
    ///
    /// Setting `alpha` also picks the render mode: below 1 renders transparent,
    /// and a culling strategy falls back to `vsv` since culling assumes opaque lines.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        if FIXED_KEYS.contains(&key) {
            return Err(Error::Config(format!("'{key}' cannot change while serving")));
        }
        let mut next = self.config.clone();
        next.set(key, value)?;
        if key == "alpha" {
            next.mode = if next.alpha < 1.0 {
                RenderMode::Transparent
            } else {
                RenderMode::Opaque
            };
        }
        if next.mode == RenderMode::Transparent && next.strategy == Strategy::Vcsv {
            log::info!("transparent mode: strategy vcsv falls back to vsv");
            next.strategy = Strategy::Vsv;
        }
        next.validate()?;
        if GEOMETRY_KEYS.contains(&key) {
            let lineset = if key == "input" || key == "seed" {
                next.input.load(next.seed)?
            } else {
                self.lineset.clone()
            };
            self.geometry = build(&next, &lineset)?;
            self.lineset = lineset;
        }
        self.config = next;
        Ok(())
    }
}

fn build(config: &Config, lineset: &LineSet) -> Result<Geometry> {
    let params = config.params();
    with_workers(config.workers, || Geometry::build(lineset, &params))
        .stage("workers")?
        .stage("voxelize")
}
