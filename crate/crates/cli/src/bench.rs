//! Counter-based experiments written as CSV, one row per
//! (experiment, dataset, resolution, method or strategy, parameter).

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use voxline_core::abuffer::Strategy;
use voxline_core::culling::Camera;
use voxline_core::lineset::{decimate, LineSet};
use voxline_core::pipeline::{render_frame, with_workers, Geometry, PipelineParams};
use voxline_core::raytracer::RenderMode;
use voxline_core::voxelizer::{Method, SegmentTable};

use crate::config::{Config, Experiment};
use crate::error::{Result, StageExt};

pub const HEADER: [&str; 26] = [
    "experiment",
    "dataset",
    "resolution",
    "method",
    "strategy",
    "mode",
    "alpha",
    "decimate",
    "segments",
    "mean_segment_voxels",
    "visited_dda",
    "visited_capsule",
    "visited_aabb",
    "fragments",
    "incidences",
    "touches",
    "culled_fraction",
    "ray_voxels",
    "capsule_tests",
    "hits",
    "passes",
    "voxelize_ms",
    "cull_ms",
    "abuffer_ms",
    "shade_ms",
    "render_ms",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BenchRow {
    pub experiment: &'static str,
    pub dataset: String,
    pub resolution: u32,
    pub method: &'static str,
    pub strategy: Option<&'static str>,
    pub mode: Option<&'static str>,
    pub alpha: Option<f64>,
    pub decimate: Option<usize>,
    pub segments: usize,
    pub mean_segment_voxels: f64,
    pub visited_dda: Option<u64>,
    pub visited_capsule: Option<u64>,
    pub visited_aabb: Option<u64>,
    pub fragments: Option<usize>,
    pub incidences: Option<u64>,
    pub touches: Option<u64>,
    pub culled_fraction: Option<f64>,
    pub ray_voxels: Option<u64>,
    pub capsule_tests: Option<u64>,
    pub hits: Option<u64>,
    pub passes: Option<u64>,
    pub voxelize_ms: f64,
    pub cull_ms: Option<f64>,
    pub abuffer_ms: Option<f64>,
    pub shade_ms: Option<f64>,
    pub render_ms: Option<f64>,
}

fn mean_length(segments: &SegmentTable) -> f64 {
    if segments.is_empty() {
        return 0.0;
    }
    segments.iter().map(|(_, c)| c.delta().length()).sum::<f64>() / segments.len() as f64
}

/// Voxels each method visits while accumulating `segments`.
fn visited(segments: &SegmentTable, res: u32, r_min: f64) -> [u64; 3] {
    Method::ALL.map(|m| {
        let mut n = 0u64;
        for (_, c) in segments.iter() {
            m.traverse_clamped(c, res, r_min, |_| n += 1);
        }
        n
    })
}

struct Runner<'a> {
    config: &'a Config,
    dataset: String,
}

impl Runner<'_> {
    fn geometry(&self, ls: &LineSet, params: &PipelineParams) -> Result<Geometry> {
        with_workers(self.config.workers, || Geometry::build(ls, params))
            .stage("workers")?
            .stage("voxelize")
    }

    fn camera(&self, g: &Geometry) -> Result<Camera> {
        let c = self.config;
        Camera::orbit(g.center(), c.distance * g.extent(), c.azimuth, c.elevation, c.fov, c.width, c.height)
            .stage("camera")
    }

    /// One row per method; every row carries all three visited counts.
    fn traversal_rows(&self, ls: &LineSet, res: u32, decimated: Option<usize>, experiment: Experiment) -> Result<Vec<BenchRow>> {
        let mut rows = Vec::new();
        for method in Method::ALL {
            let params = PipelineParams {
                method,
                ..self.config.params_at(res)
            };
            let start = Instant::now();
            let g = self.geometry(ls, &params)?;
            let voxelize_ms = start.elapsed().as_secs_f64() * 1e3;
            let [dda, capsule, aabb] = visited(&g.segments, res, params.r_min);
            rows.push(BenchRow {
                experiment: experiment.name(),
                dataset: self.dataset.clone(),
                resolution: res,
                method: method.name(),
                decimate: decimated,
                segments: g.segments.len(),
                mean_segment_voxels: mean_length(&g.segments),
                visited_dda: Some(dda),
                visited_capsule: Some(capsule),
                visited_aabb: Some(aabb),
                voxelize_ms,
                ..BenchRow::default()
            });
        }
        Ok(rows)
    }

    fn frame_row(&self, ls: &LineSet, experiment: Experiment, params: PipelineParams) -> Result<BenchRow> {
        let g = self.geometry(ls, &params)?;
        let cam = self.camera(&g)?;
        let f = with_workers(self.config.workers, || render_frame(&g, &cam, &params))
            .stage("workers")?
            .stage("frame")?;
        let s = &params.settings;
        Ok(BenchRow {
            experiment: experiment.name(),
            dataset: self.dataset.clone(),
            resolution: params.resolution,
            method: params.method.name(),
            strategy: Some(params.strategy.name()),
            mode: Some(s.mode.name()),
            alpha: Some(s.alpha),
            segments: g.segments.len(),
            mean_segment_voxels: mean_length(&g.segments),
            fragments: Some(f.abuffer.fragment_total()),
            incidences: Some(f.abuffer.stats.incidences),
            touches: Some(f.abuffer.stats.touches()),
            culled_fraction: Some(f.culled_fraction(&g)),
            ray_voxels: Some(f.counters.voxels),
            capsule_tests: Some(f.counters.capsule_tests),
            hits: Some(f.counters.hits),
            passes: Some(f.counters.passes),
            voxelize_ms: f.times.voxelize,
            cull_ms: Some(f.times.cull),
            abuffer_ms: Some(f.times.abuffer),
            shade_ms: Some(f.times.shade),
            render_ms: Some(f.times.render),
            ..BenchRow::default()
        })
    }
}

/// Runs the configured experiments. An empty matrix yields no rows.
pub fn bench_rows(config: &Config) -> Result<Vec<BenchRow>> {
    config.validate()?;
    if config.experiments.is_empty() {
        return Ok(Vec::new());
    }
    let ls = config.input.load(config.seed)?;
    let runner = Runner {
        config,
        dataset: config.input.to_string(),
    };
    let mut rows = Vec::new();
    for &experiment in &config.experiments {
        log::info!("bench: {}", experiment.name());
        match experiment {
            Experiment::Traversal => {
                for &res in &config.bench_res {
                    rows.extend(runner.traversal_rows(&ls, res, None, experiment)?);
                }
            }
            Experiment::Length => {
                for &n in &config.bench_decimate {
                    rows.extend(runner.traversal_rows(&decimate(&ls, n), config.res, Some(n), experiment)?);
                }
            }
            Experiment::Strategy => {
                for &res in &config.bench_res {
                    for strategy in Strategy::ALL {
                        let mut params = config.params_at(res);
                        params.strategy = strategy;
                        params.settings.mode = RenderMode::Opaque;
                        params.settings.alpha = 1.0;
                        rows.push(runner.frame_row(&ls, experiment, params)?);
                    }
                }
            }
            Experiment::Opacity => {
                for &alpha in &config.bench_alpha {
                    let mut params = config.params();
                    if params.strategy == Strategy::Vcsv {
                        params.strategy = Strategy::Vsv;
                    }
                    params.settings.mode = RenderMode::Transparent;
                    params.settings.alpha = alpha;
                    rows.push(runner.frame_row(&ls, experiment, params)?);
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the matrix and writes `<out>.csv`.
pub fn cmd_bench(config: Config) -> Result<PathBuf> {
    let rows = bench_rows(&config)?;
    let path = config.out_path(".csv");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_csv(&rows, fs::File::create(&path)?)?;
    log::info!("bench: {} rows written to {}", rows.len(), path.display());
    Ok(path)
}
