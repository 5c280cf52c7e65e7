//! Voxel ray tracing of dynamic line sets.
//!
//! The pipeline voxelizes capsule-shaped line segments into an occupancy
//! pyramid, marks camera-visible voxels, builds per-voxel fragment lists,
//! precomputes cone-traced shading and finally ray traces the voxel grid with
//! either opaque early termination or exactly ordered transparency.

pub mod abuffer;
pub mod culling;
pub mod error;
pub mod lineset;
pub mod pipeline;
pub mod raytracer;
pub mod shading;
pub mod voxelizer;

pub use error::{Error, Result};
pub use glam;

#[cfg(test)]
extern crate self as voxline_core;

#[cfg(test)]
#[path = "../tests/common/oracle.rs"]
pub(crate) mod test_oracle;

#[cfg(test)]
#[path = "../tests/common/brute.rs"]
pub(crate) mod test_brute;
