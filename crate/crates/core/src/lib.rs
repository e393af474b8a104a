//! Example-based photometric stereo: per-pixel normals and spatially varying
//! BRDFs from calibrated multi-light image stacks, using a dictionary of
//! tabulated BRDFs as virtual exemplars.

pub mod brdf;
pub mod error;
pub mod geometry;
pub mod io;
pub mod normals;
pub mod pipeline;
pub mod reflectance;
pub mod render;

pub use error::{Error, Result};
