//! Offline 3D general obstacle detection from recorded lidar sweeps and
//! camera label masks.
//!
//! The pipeline is training free: camera masks produced by off-board
//! segmentation are fused with unsupervised geometry on the lidar side
//! (ground removal, clustering, scan registration, a road surface model)
//! to produce tracked, oriented boxes, which are scored on a bird's-eye
//! grid against ground truth.

pub mod camera;
pub mod cluster;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fuse;
pub mod geometry;
pub mod ground;
pub mod kdtree;
pub mod kinematics;
pub mod maskproc;
pub mod pipeline;
pub mod register;
pub mod rng;
pub mod synthgen;
pub mod track;
pub mod transform;
pub mod types;

pub use error::{Error, Result};
