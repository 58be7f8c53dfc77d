//! Core algorithms for reconstructing a refractive water surface and the
//! 3D Gaussian scene beneath it from multi-view images.
//!
//! The crate is `no_std`-compatible (with `alloc`); all IO, file formats and
//! the command line live in the companion `refrac` crate.
//!
//! The pipeline, per camera ray: intersect the neural height field through a
//! proxy mesh (recursive subdivision tracing), bend the ray with Snell's law,
//! then accumulate color through the Gaussian field front to back. Every stage
//! has a hand-written analytic backward pass so that image-space loss
//! gradients reach both the Gaussian parameters and the height-field MLP
//! weights.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod adam;
pub mod bvh;
pub mod camera;
pub mod gaussian;
pub mod heightfield;
pub mod loss;
mod math;
pub mod mesh;
pub mod refract;
pub mod render;
pub mod rng;
pub mod sh;
pub mod trace;
pub mod train;
pub mod triangle;
pub mod vec3;

pub use camera::Camera;
pub use gaussian::{Gaussian, GaussianField};
pub use heightfield::HeightFieldNet;
pub use refract::RefractionConfig;
pub use vec3::{Ray, Vec3};
