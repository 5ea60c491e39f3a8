//! Object-level mapping with per-object neural fields.

pub mod error;
pub mod geometry;
pub mod mesh;
pub mod dataset;
pub mod nerf;
pub mod objslam;
pub mod render;
pub mod pipeline;
pub mod train;

pub use error::{Error, Result};
