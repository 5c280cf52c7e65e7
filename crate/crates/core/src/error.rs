use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("degenerate polyline starting at vertex {0}")]
    DegeneratePolyline(usize),

    #[error("voxel coordinate {0:?} out of range for a 30-bit morton code")]
    MortonRange([u32; 3]),

    #[error("fragment total {total} exceeds capacity {capacity}")]
    Capacity { total: u64, capacity: u64 },

    #[error("a-buffer consistency fault at voxel {voxel}: {message}")]
    Consistency { voxel: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
