use std::process::ExitCode;

use voxline::cli::{run, Outcome};
use voxline::Error;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(std::env::args_os()) {
        Ok(Outcome::Rendered(out)) => {
            println!("{}", out.image.display());
            println!("{}", out.hit_ids.display());
            println!("{}", out.stats_file.display());
            ExitCode::SUCCESS
        }
        Ok(Outcome::Benched(path)) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
