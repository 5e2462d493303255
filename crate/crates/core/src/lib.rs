//! Differentiable 4D Gaussian splatting with context- and deformation-aware
//! compensation.
//!
//! The numeric kernels are generic over [`Real`] (`f32` or `f64`); training
//! and the file formats run at `f64`. The aliases below name the `f64`
//! instantiations used throughout the pipeline.

pub mod awareness;
mod binio;
pub mod deform;
pub mod edit;
pub mod error;
pub mod kvconf;
pub mod loss;
pub mod numeric;
pub mod real;
pub mod render;
pub mod scene;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;

pub type Scene = scene::GaussianScene<f64>;
pub type Cam = scene::Camera<f64>;
