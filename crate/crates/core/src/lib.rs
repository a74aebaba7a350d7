//! Decode, 3D geometry and evaluation core of a keypoint-based 3D object
//! detector, with a synthetic-scene oracle that renders the maps an ideal
//! network would emit.

pub mod bundle;
pub mod cli;
pub mod dataset;
pub mod decode;
pub mod error;
pub mod fmap;
pub mod geometry;
pub mod io;
pub mod kitti;
pub mod metrics;
pub mod model;
pub mod pooling;
pub mod synth;

pub use error::{Error, Result};
