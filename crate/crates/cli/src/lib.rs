//! Command-line harness for the voxline pipeline: configuration, the
//! `render` and `bench` commands, and the frame-streaming service.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod render;
pub mod serve;
pub mod session;

pub use config::Config;
pub use error::{Error, Result};
