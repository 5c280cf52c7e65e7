//! Command-line parsing: a config file first, then flags, one per config key.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Arg, ArgMatches, Command};

use crate::config::{Config, KEYS};
use crate::error::Result;
use crate::{bench, render, serve};

pub fn command() -> Command {
    let mut cmd = Command::new("voxline")
        .about("Voxel ray tracing of line sets: render, benchmark and stream frames")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .value_name("FILE")
                .help("key = value config file; flags override it")
                .global(true),
        )
        .subcommand(Command::new("render").about("Render one frame to PPM, hit-id dump and stats"))
        .subcommand(Command::new("bench").about("Run the benchmark matrix and write CSV"))
        .subcommand(Command::new("serve").about("Stream frames over WebSocket"));
    for (key, help) in KEYS {
        let mut arg = Arg::new(*key).long(*key).value_name("VALUE").help(*help).global(true);
        if key.contains('_') {
            arg = arg.visible_alias(key.replace('_', "-"));
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

/// Config from the optional file plus flag overrides.
pub fn config_from(matches: &ArgMatches) -> Result<Config> {
    let mut config = Config::default();
    if let Some(path) = matches.get_one::<String>("config") {
        config.apply_file(&PathBuf::from(path))?;
    }
    for (key, _) in KEYS {
        if let Some(value) = matches.get_one::<String>(key) {
            config.set(key, value)?;
        }
    }
    Ok(config)
}

/// What a command produced, for the caller to report.
#[derive(Debug)]
pub enum Outcome {
    Rendered(Box<render::RenderOutputs>),
    Benched(PathBuf),
}

pub fn run<I, T>(args: I) -> Result<Outcome>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command().get_matches_from(args);
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let config = config_from(sub)?;
    config.validate()?;
    match name {
        "render" => render::cmd_render(config).map(|o| Outcome::Rendered(Box::new(o))),
        "bench" => bench::cmd_bench(config).map(Outcome::Benched),
        "serve" => serve::cmd_serve(config).map(|()| unreachable!("the service loop does not return")),
        _ => unreachable!("unknown subcommand {name}"),
    }
}
