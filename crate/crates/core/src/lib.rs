//! Layered scene-text editing.
//!
//! An edit runs in four stages: cut the text out of the image as a
//! foreground layer, restore the background underneath it, move or replace
//! the layer with a homography, then re-composite it with a depth-aware
//! brightness/contrast correction. [`pipeline`] wires the stages together
//! from a JSON edit script; [`metrics`] scores the result.
//!
//! Pixel storage is 8-bit. The numeric kernels are generic over
//! [`Real`] (`f32`/`f64`); the aliases below fix the common choice.

// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compose;
pub mod depth;
pub mod error;
pub mod foreground;
pub mod inpaint;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod provider;
pub mod raster;
pub mod scalar;
pub mod synthetic;
pub mod transform;

pub use error::{Error, Result, Stage};
pub use foreground::{DetectionSet, ForegroundLayer};
pub use raster::{BBox, BinaryMask, RasterImage, TextRegion};
pub use scalar::Real;

/// Homography in double precision.
pub type Homography = transform::Transform2D<f64>;
/// Homography in single precision.
pub type Homography32 = transform::Transform2D<f32>;
pub type QuadWarp = transform::QuadWarp<f64>;
/// Normalized depth map in double precision.
pub type Depth = raster::DepthMap<f64>;
pub type Depth32 = raster::DepthMap<f32>;
pub type DepthDelta = depth::DepthDelta<f64>;
pub type DepthParams = depth::DepthParams<f64>;
pub type Histogram = metrics::ChannelHistogram<f64>;
pub type Histogram32 = metrics::ChannelHistogram<f32>;
