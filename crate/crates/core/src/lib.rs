//! Hierarchical segmentation with ultrametric feature distances.

pub mod camera;
pub mod error;
pub mod graph;
pub mod hierarchy;
pub mod io;
pub mod mask;
pub mod segmentation;
pub mod losses;
pub mod masktree;
pub mod metrics;
mod unionfind;

pub use error::{Error, Result};
