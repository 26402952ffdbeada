pub mod depth;
pub mod error;
pub mod frame;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod synth;
pub mod voxel;

pub use error::{Error, Result};
