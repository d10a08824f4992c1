//! Geometry-guided face animation at toy scale.
//!
//! A parametric head ([`face_model`]) is posed and rasterized ([`raster`]) into
//! guidance maps ([`guidance`]) that steer a progressive warping generator
//! ([`network`]). [`training`] holds the losses and optimisation loop and
//! [`pipeline`] the synthetic data, metrics and reenactment drivers.

pub mod archive;
mod error;
pub mod face_model;
pub mod guidance;
pub mod network;
pub mod pipeline;
pub mod raster;
pub mod training;

pub use error::{Error, Result};
