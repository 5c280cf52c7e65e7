//! Line-set data model: polylines sharing one tube radius.
//!
//! Segment `i` always denotes the edge from vertex `i` to vertex `i + 1` of the
//! same polyline, so a fragment only has to carry one vertex index.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use glam::{DVec3, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LineSet {
    vertices: Vec<Vec3>,
    /// Start index of each polyline plus a terminal sentinel equal to the vertex count.
    polyline_offsets: Vec<u32>,
    radius: f32,
}

impl LineSet {
    pub fn new(vertices: Vec<Vec3>, polyline_offsets: Vec<u32>, radius: f32) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Param(format!("radius must be positive, got {radius}")));
        }
        if polyline_offsets.first().copied() != Some(0) {
            return Err(Error::Param("polyline offsets must start at 0".into()));
        }
        if *polyline_offsets.last().unwrap() as usize != vertices.len() {
            return Err(Error::Param(
                "terminal polyline offset must equal the vertex count".into(),
            ));
        }
        for w in polyline_offsets.windows(2) {
            if w[1] < w[0] + 2 {
                return Err(Error::Param(format!(
                    "polyline starting at vertex {} has fewer than 2 vertices",
                    w[0]
                )));
            }
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::Param(format!("vertex {i} is not finite")));
        }
        Ok(LineSet {
            vertices,
            polyline_offsets,
            radius,
        })
    }

    /// A line set without polylines; only useful as a degenerate scene.
    pub fn empty(radius: f32) -> Self {
        LineSet {
            vertices: Vec::new(),
            polyline_offsets: vec![0],
            radius,
        }
    }

    pub fn from_polylines<I, P>(polylines: I, radius: f32) -> Result<Self>
    where
        I: IntoIterator<Item = P>,
        P: IntoIterator<Item = Vec3>,
    {
        let mut vertices = Vec::new();
        let mut offsets = vec![0u32];
        for line in polylines {
            vertices.extend(line);
            offsets.push(vertices.len() as u32);
        }
        Self::new(vertices, offsets, radius)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn polyline_offsets(&self) -> &[u32] {
        &self.polyline_offsets
    }

    pub fn radius(&self) -> f32 {
        self.radius
    }

    pub fn with_radius(mut self, radius: f32) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Param(format!("radius must be positive, got {radius}")));
        }
        self.radius = radius;
        Ok(self)
    }

    pub fn polyline_count(&self) -> usize {
        self.polyline_offsets.len() - 1
    }

    pub fn segment_count(&self) -> usize {
        self.vertices.len() - self.polyline_count()
    }

    pub fn polyline(&self, p: usize) -> &[Vec3] {
        let lo = self.polyline_offsets[p] as usize;
        let hi = self.polyline_offsets[p + 1] as usize;
        &self.vertices[lo..hi]
    }

    pub fn polylines(&self) -> impl Iterator<Item = &[Vec3]> + '_ {
        (0..self.polyline_count()).map(move |p| self.polyline(p))
    }

    /// Global indices `i` of all segments `v_i -> v_{i+1}`.
    pub fn segment_indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.polyline_offsets
            .windows(2)
            .flat_map(|w| w[0]..w[1] - 1)
    }

    /// True when `v_i` is the first vertex of its polyline.
    pub fn is_polyline_start(&self, i: usize) -> bool {
        self.polyline_offsets[..self.polyline_count()]
            .binary_search(&(i as u32))
            .is_ok()
    }

    /// True when `v_i` is the last vertex of its polyline.
    pub fn is_polyline_end(&self, i: usize) -> bool {
        self.polyline_offsets[1..]
            .binary_search(&(i as u32 + 1))
            .is_ok()
    }

    pub fn total_arc_length(&self) -> f64 {
        self.segment_indices()
            .map(|i| {
                let i = i as usize;
                (self.vertices[i + 1].as_dvec3() - self.vertices[i].as_dvec3()).length()
            })
            .sum()
    }

    pub fn mean_segment_length(&self) -> f64 {
        let n = self.segment_count();
        if n == 0 {
            0.0
        } else {
            self.total_arc_length() / n as f64
        }
    }

    /// Axis-aligned bounds of all vertices, `None` when empty.
    pub fn bounds(&self) -> Option<(DVec3, DVec3)> {
        let first = self.vertices.first()?.as_dvec3();
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            let v = v.as_dvec3();
            (lo.min(v), hi.max(v))
        }))
    }

    pub fn translated(&self, offset: Vec3) -> LineSet {
        LineSet {
            vertices: self.vertices.iter().map(|v| *v + offset).collect(),
            polyline_offsets: self.polyline_offsets.clone(),
            radius: self.radius,
        }
    }
}

/// One line segment as a tube of radius `r`, optionally truncated by a clip
/// plane at each end. A plane through `v0` with normal `n0` keeps the side
/// `(p - v0) · n0 >= 0`; the plane at `v1` keeps `(p - v1) · n1 <= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule {
    pub v0: DVec3,
    pub v1: DVec3,
    pub r: f64,
    pub n0: Option<DVec3>,
    pub n1: Option<DVec3>,
}

impl Capsule {
    pub fn new(v0: DVec3, v1: DVec3, r: f64) -> Self {
        Capsule {
            v0,
            v1,
            r,
            n0: None,
            n1: None,
        }
    }

    pub fn clipped(v0: DVec3, v1: DVec3, r: f64, n0: DVec3, n1: DVec3) -> Self {
        Capsule {
            v0,
            v1,
            r,
            n0: Some(n0),
            n1: Some(n1),
        }
    }

    pub fn delta(&self) -> DVec3 {
        self.v1 - self.v0
    }

    pub fn with_radius(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    /// Bounds of the unclipped capsule.
    pub fn aabb(&self) -> (DVec3, DVec3) {
        (
            self.v0.min(self.v1) - DVec3::splat(self.r),
            self.v0.max(self.v1) + DVec3::splat(self.r),
        )
    }
}

/// Per-vertex clip-plane normals (unit tangents).
#[derive(Clone, Debug, PartialEq)]
pub struct ClipNormals {
    pub normals: Vec<DVec3>,
}

/// Central-difference tangents at interior vertices, one-sided at polyline ends.
pub fn compute_clip_normals(ls: &LineSet) -> Result<ClipNormals> {
    let mut normals = Vec::with_capacity(ls.vertices.len());
    for (p, line) in ls.polylines().enumerate() {
        let pts: Vec<DVec3> = line.iter().map(|v| v.as_dvec3()).collect();
        let n = pts.len();
        // Direction of segment j, None when zero length.
        let seg_dir = |j: usize| (pts[j + 1] - pts[j]).try_normalize();
        let nearest_segment = |i: usize| -> Option<DVec3> {
            // Closest non-degenerate segment to vertex i, preferring the forward side on ties.
            (0..n - 1)
                .filter_map(|j| {
                    let dist = if j >= i { j - i } else { i - 1 - j };
                    seg_dir(j).map(|d| (dist, j < i, d))
                })
                .min_by_key(|&(dist, before, _)| (dist, before))
                .map(|(_, _, d)| d)
        };
        for i in 0..n {
            let diff = if i == 0 {
                pts[1] - pts[0]
            } else if i == n - 1 {
                pts[n - 1] - pts[n - 2]
            } else {
                pts[i + 1] - pts[i - 1]
            };
            let normal = match diff.try_normalize() {
                Some(d) => d,
                None => nearest_segment(i)
                    .ok_or(Error::DegeneratePolyline(ls.polyline_offsets[p] as usize))?,
            };
            normals.push(normal);
        }
    }
    Ok(ClipNormals { normals })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    Helix {
        turns: f64,
        verts: usize,
        helix_radius: f64,
        pitch: f64,
        line_radius: f64,
    },
    /// Smooth random walks inside `[0, extent]^3`.
    RandomStreamlines {
        count: usize,
        verts_per_line: usize,
        segment_length: f64,
        extent: f64,
        line_radius: f64,
    },
    /// Two-vertex polylines along the body diagonal `(1,1,1)`, each spanning `length` per axis.
    GridDiagonals {
        length: f64,
        count: usize,
        spacing: f64,
        line_radius: f64,
    },
    /// Stacked sheets of dense parallel lines along x, an occluding fixture.
    Layers {
        sheets: usize,
        lines_per_sheet: usize,
        extent: f64,
        line_radius: f64,
    },
}

impl Generator {
    pub fn helix() -> Self {
        Generator::Helix {
            turns: 4.0,
            verts: 400,
            helix_radius: 10.0,
            pitch: 6.0,
            line_radius: 0.5,
        }
    }

    pub fn random_streamlines() -> Self {
        Generator::RandomStreamlines {
            count: 200,
            verts_per_line: 40,
            segment_length: 1.0,
            extent: 32.0,
            line_radius: 0.1,
        }
    }

    pub fn grid_diagonals(length: f64) -> Self {
        Generator::GridDiagonals {
            length,
            count: 16,
            spacing: 4.0,
            line_radius: 0.2,
        }
    }

    pub fn layers() -> Self {
        Generator::Layers {
            sheets: 4,
            lines_per_sheet: 24,
            extent: 32.0,
            line_radius: 0.6,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Generator::Helix { .. } => "helix",
            Generator::RandomStreamlines { .. } => "random_streamlines",
            Generator::GridDiagonals { .. } => "grid_diagonals",
            Generator::Layers { .. } => "layers",
        }
    }

    /// Default generator for `kind` with `key=value` overrides applied.
    pub fn from_kind(kind: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut g = match kind {
            "helix" => Self::helix(),
            "random_streamlines" => Self::random_streamlines(),
            "grid_diagonals" => Self::grid_diagonals(64.0),
            "layers" => Self::layers(),
            other => return Err(Error::Param(format!("unknown generator kind '{other}'"))),
        };
        for (key, value) in overrides {
            g.set(key, value)?;
        }
        Ok(g)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let float = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::Param(format!("{key}: expected a number, got '{value}'")))
        };
        let int = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::Param(format!("{key}: expected an integer, got '{value}'")))
        };
        let kind = self.kind_name();
        let unknown = || Error::Param(format!("unknown parameter '{key}' for {kind}"));
        match self {
            Generator::Helix {
                turns,
                verts,
                helix_radius,
                pitch,
                line_radius,
            } => match key {
                "turns" => *turns = float()?,
                "verts" => *verts = int()?,
                "helix_radius" => *helix_radius = float()?,
                "pitch" => *pitch = float()?,
                "radius" => *line_radius = float()?,
                _ => return Err(unknown()),
            },
            Generator::RandomStreamlines {
                count,
                verts_per_line,
                segment_length,
                extent,
                line_radius,
            } => match key {
                "count" => *count = int()?,
                "verts" => *verts_per_line = int()?,
                "seglen" => *segment_length = float()?,
                "extent" => *extent = float()?,
                "radius" => *line_radius = float()?,
                _ => return Err(unknown()),
            },
            Generator::GridDiagonals {
                length,
                count,
                spacing,
                line_radius,
            } => match key {
                "length" => *length = float()?,
                "count" => *count = int()?,
                "spacing" => *spacing = float()?,
                "radius" => *line_radius = float()?,
                _ => return Err(unknown()),
            },
            Generator::Layers {
                sheets,
                lines_per_sheet,
                extent,
                line_radius,
            } => match key {
                "sheets" => *sheets = int()?,
                "lines" => *lines_per_sheet = int()?,
                "extent" => *extent = float()?,
                "radius" => *line_radius = float()?,
                _ => return Err(unknown()),
            },
        }
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!("{name} must be positive, got {v}")))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(Error::Param(format!("{name} must be at least {min}, got {v}")))
    }
}

/// Builds a synthetic line set; identical output for identical `(gen, seed)`.
pub fn generate(gen: &Generator, seed: u64) -> Result<LineSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *gen {
        Generator::Helix {
            turns,
            verts,
            helix_radius,
            pitch,
            line_radius,
        } => {
            positive("turns", turns)?;
            at_least("verts", verts, 2)?;
            positive("helix_radius", helix_radius)?;
            positive("radius", line_radius)?;
            let line = (0..verts).map(|i| {
                let u = i as f64 / (verts - 1) as f64;
                let phi = u * turns * std::f64::consts::TAU;
                Vec3::new(
                    (helix_radius * phi.cos()) as f32,
                    (helix_radius * phi.sin()) as f32,
                    (pitch * turns * u) as f32,
                )
            });
            LineSet::from_polylines([line], line_radius as f32)
        }
        Generator::RandomStreamlines {
            count,
            verts_per_line,
            segment_length,
            extent,
            line_radius,
        } => {
            at_least("count", count, 1)?;
            at_least("verts", verts_per_line, 2)?;
            positive("seglen", segment_length)?;
            positive("extent", extent)?;
            positive("radius", line_radius)?;
            let unit = |rng: &mut ChaCha8Rng| loop {
                let v = DVec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let l2 = v.length_squared();
                if l2 > 1e-4 && l2 <= 1.0 {
                    return v / l2.sqrt();
                }
            };
            let mut lines = Vec::with_capacity(count);
            for _ in 0..count {
                let mut p = DVec3::new(
                    rng.gen_range(0.0..extent),
                    rng.gen_range(0.0..extent),
                    rng.gen_range(0.0..extent),
                );
                let mut dir = unit(&mut rng);
                let mut line = Vec::with_capacity(verts_per_line);
                line.push(p.as_vec3());
                for _ in 1..verts_per_line {
                    dir = (dir + 0.3 * unit(&mut rng)).normalize();
                    let mut next = p + dir * segment_length;
                    for a in 0..3 {
                        if next[a] < 0.0 || next[a] > extent {
                            dir[a] = -dir[a];
                            next[a] = p[a] + dir[a] * segment_length;
                        }
                    }
                    p = next.clamp(DVec3::ZERO, DVec3::splat(extent));
                    line.push(p.as_vec3());
                }
                lines.push(line);
            }
            LineSet::from_polylines(lines, line_radius as f32)
        }
        Generator::GridDiagonals {
            length,
            count,
            spacing,
            line_radius,
        } => {
            positive("length", length)?;
            at_least("count", count, 1)?;
            positive("spacing", spacing)?;
            positive("radius", line_radius)?;
            // Offsets along (1,-1,0) keep every segment parallel to the body diagonal.
            let lines = (0..count).map(|i| {
                let o = DVec3::new(1.0, -1.0, 0.0) * spacing * i as f64
                    + DVec3::new(0.0, spacing * count as f64, 0.0);
                let jitter = DVec3::new(
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                );
                let a = o + jitter;
                let b = a + DVec3::splat(length);
                [a.as_vec3(), b.as_vec3()]
            });
            let lines: Vec<_> = lines.collect();
            LineSet::from_polylines(lines, line_radius as f32)
        }
        Generator::Layers {
            sheets,
            lines_per_sheet,
            extent,
            line_radius,
        } => {
            at_least("sheets", sheets, 1)?;
            at_least("lines", lines_per_sheet, 1)?;
            positive("extent", extent)?;
            positive("radius", line_radius)?;
            let spacing_y = extent / lines_per_sheet as f64;
            let spacing_z = extent / sheets as f64;
            let verts = 8usize;
            let mut lines = Vec::with_capacity(sheets * lines_per_sheet);
            for s in 0..sheets {
                for l in 0..lines_per_sheet {
                    let y = (l as f64 + 0.5) * spacing_y + rng.gen_range(-0.05..0.05);
                    let z = (s as f64 + 0.5) * spacing_z;
                    lines.push(
                        (0..verts)
                            .map(|v| {
                                let x = extent * v as f64 / (verts - 1) as f64;
                                Vec3::new(x as f32, y as f32, z as f32)
                            })
                            .collect::<Vec<_>>(),
                    );
                }
            }
            LineSet::from_polylines(lines, line_radius as f32)
        }
    }
}

/// Keeps vertices `0, n, 2n, …` of every polyline plus its last vertex.
pub fn decimate(ls: &LineSet, n: usize) -> LineSet {
    let n = n.max(1);
    if n == 1 {
        return ls.clone();
    }
    let mut vertices = Vec::new();
    let mut offsets = vec![0u32];
    for line in ls.polylines() {
        let last = line.len() - 1;
        vertices.extend(line.iter().step_by(n).copied());
        if last % n != 0 {
            vertices.push(line[last]);
        }
        offsets.push(vertices.len() as u32);
    }
    LineSet {
        vertices,
        polyline_offsets: offsets,
        radius: ls.radius,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineSetFormat {
    Text,
    Binary,
}

impl LineSetFormat {
    /// `.lnsb` selects the binary format, everything else is text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("lnsb") => LineSetFormat::Binary,
            _ => LineSetFormat::Text,
        }
    }
}

const BINARY_MAGIC: &[u8; 4] = b"LNS1";

pub fn load_lineset(path: &Path, format: LineSetFormat) -> Result<LineSet> {
    let file = fs::File::open(path)?;
    match format {
        LineSetFormat::Text => parse_text(BufReader::new(file)),
        LineSetFormat::Binary => {
            let mut bytes = Vec::new();
            BufReader::new(file).read_to_end(&mut bytes)?;
            parse_binary(&bytes)
        }
    }
}

pub fn save_lineset(ls: &LineSet, path: &Path, format: LineSetFormat) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    match format {
        LineSetFormat::Text => write_text(ls, &mut out)?,
        LineSetFormat::Binary => out.write_all(&to_binary(ls))?,
    }
    out.flush()?;
    Ok(())
}

pub fn write_text<W: Write>(ls: &LineSet, out: &mut W) -> Result<()> {
    writeln!(out, "lns 1 radius={}", ls.radius)?;
    for (p, line) in ls.polylines().enumerate() {
        if p > 0 {
            writeln!(out)?;
        }
        for v in line {
            writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
        }
    }
    Ok(())
}

pub fn parse_text<R: BufRead>(reader: R) -> Result<LineSet> {
    let mut lines = reader.lines().enumerate();
    let radius = loop {
        let Some((no, line)) = lines.next() else {
            return Err(Error::parse("line 1", "no polylines"));
        };
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let loc = format!("line {}", no + 1);
        let mut parts = trimmed.split_whitespace();
        if parts.next() != Some("lns") || parts.next() != Some("1") {
            return Err(Error::parse(loc, "expected header 'lns 1 radius=<float>'"));
        }
        let radius = parts
            .next()
            .and_then(|kv| kv.strip_prefix("radius="))
            .ok_or_else(|| Error::parse(loc.clone(), "header is missing radius=<float>"))?;
        let radius: f32 = radius
            .parse()
            .map_err(|_| Error::parse(loc.clone(), format!("bad radius '{radius}'")))?;
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::parse(loc, "radius must be positive and finite"));
        }
        break radius;
    };

    let mut vertices = Vec::new();
    let mut offsets = vec![0u32];
    let mut current_start_line = None;
    let close = |vertices: &Vec<Vec3>, offsets: &mut Vec<u32>, start: Option<usize>| {
        let begin = *offsets.last().unwrap() as usize;
        match vertices.len() - begin {
            0 => Ok(()),
            1 => Err(Error::parse(
                format!("line {}", start.unwrap_or(0)),
                "polyline has fewer than 2 vertices",
            )),
            _ => {
                offsets.push(vertices.len() as u32);
                Ok(())
            }
        }
    };
    for (no, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            close(&vertices, &mut offsets, current_start_line)?;
            current_start_line = None;
            continue;
        }
        let loc = format!("line {}", no + 1);
        let mut parts = trimmed.split_whitespace();
        if parts.next() != Some("v") {
            return Err(Error::parse(loc, format!("expected 'v x y z', got '{trimmed}'")));
        }
        let mut xyz = [0f32; 3];
        for c in xyz.iter_mut() {
            let tok = parts
                .next()
                .ok_or_else(|| Error::parse(loc.clone(), "vertex needs three coordinates"))?;
            *c = tok
                .parse()
                .map_err(|_| Error::parse(loc.clone(), format!("bad coordinate '{tok}'")))?;
            if !c.is_finite() {
                return Err(Error::parse(loc.clone(), "non-finite coordinate"));
            }
        }
        if parts.next().is_some() {
            return Err(Error::parse(loc, "trailing tokens after vertex"));
        }
        current_start_line.get_or_insert(no + 1);
        vertices.push(Vec3::from_array(xyz));
    }
    close(&vertices, &mut offsets, current_start_line)?;
    if offsets.len() == 1 {
        return Err(Error::parse("end of file", "no polylines"));
    }
    LineSet::new(vertices, offsets, radius)
}

pub fn to_binary(ls: &LineSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * ls.polyline_offsets.len() + 12 * ls.vertices.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(ls.polyline_count() as u32).to_le_bytes());
    out.extend_from_slice(&(ls.vertices.len() as u32).to_le_bytes());
    out.extend_from_slice(&ls.radius.to_le_bytes());
    for o in &ls.polyline_offsets {
        out.extend_from_slice(&o.to_le_bytes());
    }
    for v in &ls.vertices {
        for c in v.to_array() {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn parse_binary(bytes: &[u8]) -> Result<LineSet> {
    let word = |at: usize| -> Result<[u8; 4]> {
        bytes
            .get(at..at + 4)
            .map(|b| b.try_into().unwrap())
            .ok_or_else(|| Error::parse(format!("byte {at}"), "unexpected end of file"))
    };
    if word(0)? != *BINARY_MAGIC {
        return Err(Error::parse("byte 0", "bad magic, expected LNS1"));
    }
    let polylines = u32::from_le_bytes(word(4)?) as usize;
    let vertex_count = u32::from_le_bytes(word(8)?) as usize;
    let radius = f32::from_le_bytes(word(12)?);
    if polylines == 0 {
        return Err(Error::parse("byte 4", "no polylines"));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::parse("byte 12", "radius must be positive and finite"));
    }
    let mut at = 16;
    let mut offsets = Vec::with_capacity(polylines + 1);
    for _ in 0..=polylines {
        offsets.push(u32::from_le_bytes(word(at)?));
        at += 4;
    }
    let mut vertices = Vec::with_capacity(vertex_count);
    for _ in 0..vertex_count {
        let mut xyz = [0f32; 3];
        for c in xyz.iter_mut() {
            *c = f32::from_le_bytes(word(at)?);
            if !c.is_finite() {
                return Err(Error::parse(format!("byte {at}"), "non-finite coordinate"));
            }
            at += 4;
        }
        vertices.push(Vec3::from_array(xyz));
    }
    if at != bytes.len() {
        return Err(Error::parse(format!("byte {at}"), "trailing bytes"));
    }
    for (p, w) in offsets.windows(2).enumerate() {
        if w[1] < w[0] + 2 {
            return Err(Error::parse(
                format!("byte {}", 16 + 4 * p),
                "polyline has fewer than 2 vertices",
            ));
        }
    }
    LineSet::new(vertices, offsets, radius).map_err(|e| Error::parse("offsets", e.to_string()))
}
