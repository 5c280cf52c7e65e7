//! Flat `key = value` configuration shared by the config file, the CLI flags
//! and the service's `set` messages.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use voxline_core::abuffer::Strategy;
use voxline_core::glam::DVec3;
use voxline_core::lineset::{generate, load_lineset, Generator, LineSet, LineSetFormat};
use voxline_core::pipeline::PipelineParams;
use voxline_core::raytracer::{RenderMode, RenderSettings};
use voxline_core::voxelizer::{Method, DEFAULT_R_MIN};

use crate::error::{Error, Result, StageExt};

/// Where the line set comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    /// `gen:kind,key=value,...`
    Generator { kind: String, overrides: Vec<(String, String)> },
    File(PathBuf),
}

impl Input {
    pub fn load(&self, seed: u64) -> Result<LineSet> {
        match self {
            Input::Generator { kind, overrides } => {
                let gen = Generator::from_kind(kind, overrides).stage("input")?;
                generate(&gen, seed).stage("input")
            }
            Input::File(path) => load_lineset(path, LineSetFormat::from_path(path)).stage("input"),
        }
    }
}

impl FromStr for Input {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let Some(spec) = s.strip_prefix("gen:") else {
            if s.is_empty() {
                return Err(Error::Config("input: empty path".into()));
            }
            return Ok(Input::File(PathBuf::from(s)));
        };
        let mut parts = spec.split(',');
        let kind = parts.next().unwrap_or_default().trim().to_string();
        let overrides = parts
            .map(|p| {
                p.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| Error::Config(format!("input: expected key=value, got '{p}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        // resolve eagerly so bad generator keys fail during validation
        Generator::from_kind(&kind, &overrides).map_err(|e| Error::Config(format!("input: {e}")))?;
        Ok(Input::Generator { kind, overrides })
    }
}

impl fmt::Display for Input {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Input::Generator { kind, overrides } => {
                write!(f, "gen:{kind}")?;
                for (k, v) in overrides {
                    write!(f, ",{k}={v}")?;
                }
                Ok(())
            }
            Input::File(p) => write!(f, "{}", p.display()),
        }
    }
}

/// Benchmark experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    /// Visited voxels and voxelization time per method and resolution.
    Traversal,
    /// Visited voxels per segment as decimation lengthens the segments.
    Length,
    /// Fragment counts, touches and stage times per A-buffer strategy.
    Strategy,
    /// Ray-capsule tests and render time per opacity.
    Opacity,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Traversal => "traversal",
            Experiment::Length => "length",
            Experiment::Strategy => "strategy",
            Experiment::Opacity => "opacity",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "traversal" => Ok(Experiment::Traversal),
            "length" => Ok(Experiment::Length),
            "strategy" => Ok(Experiment::Strategy),
            "opacity" => Ok(Experiment::Opacity),
            _ => Err(Error::Config(format!("unknown experiment '{s}'"))),
        }
    }
}

/// Every configuration key with a one-line description. Each is also a CLI flag.
pub const KEYS: &[(&str, &str)] = &[
    ("input", "line set file, or gen:KIND[,key=value...] for a generator"),
    ("seed", "generator seed"),
    ("res", "grid resolution, a power of two"),
    ("method", "voxelization method: dda, capsule or aabb"),
    ("radius", "tube radius in voxels"),
    ("r_min", "minimum voxelization radius in voxels"),
    ("clip", "clip capsules at interior vertices (true/false)"),
    ("strategy", "A-buffer strategy: vss, vsv or vcsv"),
    ("mode", "render mode: opaque or transparent"),
    ("alpha", "line opacity in (0, 1]"),
    ("k", "k-buffer size for transparency"),
    ("width", "image width in pixels"),
    ("height", "image height in pixels"),
    ("azimuth", "orbit camera azimuth in radians"),
    ("elevation", "orbit camera elevation in radians"),
    ("distance", "orbit camera distance in grid extents"),
    ("fov", "vertical field of view in radians"),
    ("light", "light travel direction x,y,z"),
    ("background", "background colour r,g,b in linear [0, 1]"),
    ("out", "output path prefix"),
    ("workers", "worker threads, 0 for all cores"),
    ("port", "service port"),
    ("revoxelize", "service re-voxelizes every frame (true/false)"),
    ("experiments", "bench experiments: traversal,length,strategy,opacity"),
    ("bench_res", "bench resolutions"),
    ("bench_decimate", "bench decimation factors for the length sweep"),
    ("bench_alpha", "bench opacities for the opacity sweep"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub input: Input,
    pub seed: u64,
    pub res: u32,
    pub method: Method,
    pub radius: f64,
    pub r_min: f64,
    pub clip: bool,
    pub strategy: Strategy,
    pub mode: RenderMode,
    pub alpha: f64,
    pub k: usize,
    pub width: u32,
    pub height: u32,
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub fov: f64,
    pub light: DVec3,
    pub background: DVec3,
    pub out: PathBuf,
    pub workers: usize,
    pub port: u16,
    pub revoxelize: bool,
    pub experiments: Vec<Experiment>,
    pub bench_res: Vec<u32>,
    pub bench_decimate: Vec<usize>,
    pub bench_alpha: Vec<f64>,
}

impl Default for Config {
    fn default() -> Self {
        let p = PipelineParams::default();
        Config {
            input: Input::Generator {
                kind: "helix".into(),
                overrides: Vec::new(),
            },
            seed: 1,
            res: p.resolution,
            method: p.method,
            radius: 0.2,
            r_min: DEFAULT_R_MIN,
            clip: true,
            strategy: p.strategy,
            mode: RenderMode::Opaque,
            alpha: 1.0,
            k: p.settings.k,
            width: 256,
            height: 256,
            azimuth: 0.6,
            elevation: 0.4,
            distance: 1.8,
            fov: 0.7,
            light: p.light_dir,
            background: p.settings.background,
            out: PathBuf::from("voxline"),
            workers: 0,
            port: 8765,
            revoxelize: false,
            experiments: vec![
                Experiment::Traversal,
                Experiment::Length,
                Experiment::Strategy,
                Experiment::Opacity,
            ],
            bench_res: vec![32, 64],
            bench_decimate: vec![1, 2, 4, 8],
            bench_alpha: vec![1.0, 0.5, 0.2, 0.1],
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected true or false, got '{other}'"))),
    }
}

fn parse_vec3(key: &str, value: &str) -> Result<DVec3> {
    let v: Vec<f64> = parse_list(key, value)?;
    match v[..] {
        [x, y, z] => Ok(DVec3::new(x, y, z)),
        _ => Err(Error::Config(format!("{key}: expected three comma-separated numbers"))),
    }
}

fn parse_enum<T: FromStr<Err = voxline_core::Error>>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|e| Error::Config(format!("{key}: {e}")))
}

impl Config {
    /// Applies one `key = value` pair. Cross-field checks happen in [`Config::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "input" => self.input = value.trim().parse()?,
            "seed" => self.seed = parse(key, value)?,
            "res" => self.res = parse(key, value)?,
            "method" => self.method = parse_enum(key, value)?,
            "radius" => self.radius = parse(key, value)?,
            "r_min" => self.r_min = parse(key, value)?,
            "clip" => self.clip = parse_bool(key, value)?,
            "strategy" => self.strategy = parse_enum(key, value)?,
            "mode" => self.mode = parse_enum(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "azimuth" => self.azimuth = parse(key, value)?,
            "elevation" => self.elevation = parse(key, value)?,
            "distance" => self.distance = parse(key, value)?,
            "fov" => self.fov = parse(key, value)?,
            "light" => self.light = parse_vec3(key, value)?,
            "background" => self.background = parse_vec3(key, value)?,
            "out" => self.out = PathBuf::from(value.trim()),
            "workers" => self.workers = parse(key, value)?,
            "port" => self.port = parse(key, value)?,
            "revoxelize" => self.revoxelize = parse_bool(key, value)?,
            "experiments" => self.experiments = parse_list(key, value)?,
            "bench_res" => self.bench_res = parse_list(key, value)?,
            "bench_decimate" => self.bench_decimate = parse_list(key, value)?,
            "bench_alpha" => self.bench_alpha = parse_list(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key = value", n + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Pipeline parameters for the current settings.
    pub fn params(&self) -> PipelineParams {
        self.params_at(self.res)
    }

    pub fn params_at(&self, res: u32) -> PipelineParams {
        PipelineParams {
            resolution: res,
            method: self.method,
            radius_voxels: Some(self.radius),
            r_min: self.r_min,
            clip: self.clip,
            strategy: self.strategy,
            light_dir: self.light,
            settings: RenderSettings {
                mode: self.mode,
                alpha: self.alpha,
                k: self.k,
                background: self.background,
                ..RenderSettings::default()
            },
        }
    }

    /// Checks every module precondition that does not need the scene.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: voxline_core::Error| Error::Config(e.to_string());
        self.params().validate().map_err(cfg)?;
        for &res in &self.bench_res {
            self.params_at(res).validate().map_err(cfg)?;
        }
        for &alpha in &self.bench_alpha {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::Config(format!("bench_alpha: {alpha} is outside (0, 1]")));
            }
        }
        if self.bench_decimate.contains(&0) {
            return Err(Error::Config("bench_decimate: factors must be at least 1".into()));
        }
        if self.width == 0 || self.height == 0 || self.width > 8192 || self.height > 8192 {
            return Err(Error::Config(format!("image size {}x{} is outside [1, 8192]", self.width, self.height)));
        }
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return Err(Error::Config(format!("fov {} is outside (0, pi)", self.fov)));
        }
        if !(self.distance.is_finite() && self.distance > 0.0) {
            return Err(Error::Config(format!("distance must be positive, got {}", self.distance)));
        }
        if !self.background.is_finite() || self.background.min_element() < 0.0 {
            return Err(Error::Config("background must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Output path: the prefix with `suffix` appended.
    pub fn out_path(&self, suffix: &str) -> PathBuf {
        let mut s = self.out.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    }
}
