use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::error::{Result, StageExt};
use crate::session::{FrameStats, Session};

/// Files written by [`cmd_render`].
#[derive(Clone, Debug)]
pub struct RenderOutputs {
    pub image: PathBuf,
    pub hit_ids: PathBuf,
    pub stats_file: PathBuf,
    pub stats: FrameStats,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Renders one frame from the configured orbit camera and writes
/// `<out>.ppm`, `<out>.hiti` and `<out>.stats.txt`.
pub fn cmd_render(config: Config) -> Result<RenderOutputs> {
    let mut session = Session::new(config)?;
    let cam = session.orbit_camera()?;
    let frame = session.render(&cam)?;
    let stats = session.stats(&frame);
    let config = session.config();

    let image = config.out_path(".ppm");
    let mut w = create(&image)?;
    frame.image.write_ppm(&mut w).stage("output")?;
    w.flush()?;

    let hit_ids = config.out_path(".hiti");
    let mut w = create(&hit_ids)?;
    frame.image.write_hit_ids(&mut w).stage("output")?;
    w.flush()?;

    let stats_file = config.out_path(".stats.txt");
    let mut w = create(&stats_file)?;
    writeln!(w, "input = {}", config.input)?;
    writeln!(w, "seed = {}", config.seed)?;
    if let serde_json::Value::Object(map) = serde_json::to_value(&stats).expect("stats serialize") {
        for (k, v) in map {
            match v {
                serde_json::Value::String(s) => writeln!(w, "{k} = {s}")?,
                other => writeln!(w, "{k} = {other}")?,
            }
        }
    }
    w.flush()?;

    log::info!(
        "rendered {}x{} in {:.1} ms, {} fragments",
        stats.width,
        stats.height,
        stats.cull_ms + stats.abuffer_ms + stats.shade_ms + stats.render_ms,
        stats.fragments
    );
    Ok(RenderOutputs {
        image,
        hit_ids,
        stats_file,
        stats,
    })
}
