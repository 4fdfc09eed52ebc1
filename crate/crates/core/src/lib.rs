//! Landslide segmentation toolkit: multi-band scenes, smart-crop sampling,
//! nine encoder–decoder architectures, five losses, grid training with
//! early stopping, validation-ranked ensembles, skill scores and figures.
//!
//! Numeric code is generic over [`slidens_tensor::Scalar`] (`f32` or `f64`);
//! the aliases below fix the precision.

pub mod ensemble;
pub mod error;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod probability;
pub mod render;
pub mod sampler;
pub mod scene;
pub mod trainer;
pub mod util;
pub mod zoo;

pub use error::{Error, Result};

pub type ModelF32 = zoo::Model<f32>;
pub type ModelF64 = zoo::Model<f64>;
pub type SampleSourceF32 = sampler::SampleSource<f32>;
pub type SampleSourceF64 = sampler::SampleSource<f64>;
pub type PatchF32 = sampler::Patch<f32>;
pub type PatchF64 = sampler::Patch<f64>;
pub type BatchF32 = sampler::Batch<f32>;
pub type BatchF64 = sampler::Batch<f64>;
