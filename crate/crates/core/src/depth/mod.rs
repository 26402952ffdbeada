//! Depth-map processing: dual-sensor fusion, 2D upscaling and
//! relative-to-metric rescaling.

mod fusion;
mod normalize;
mod srcnn;
mod upscale;

pub use fusion::{fuse_depth, FusionConfig};
pub use normalize::normalize_relative_to_metric;
pub use srcnn::{conv2d_forward, srcnn_upscale, Activation, ConvLayer, PlaneStack, SrcnnWeights};
pub use upscale::upscale_bilinear;

/// Full scale of 16-bit millimeter depth; the network operates on depth
/// divided by this constant.
pub const DEPTH_FULL_SCALE: f64 = 65535.0;
