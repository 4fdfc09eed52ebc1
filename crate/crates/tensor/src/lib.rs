//! Minimal tensor engine for small fully-convolutional networks.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`). Math is
//! single-threaded and deterministic: the same inputs produce the same
//! bits on a given platform.

mod error;
mod graph;
pub mod kernels;
mod param;
mod scalar;
mod tensor;

pub use error::TensorError;
pub use graph::{Grads, Graph, Var};
pub use kernels::conv::Conv2dCfg;
pub use param::{Adam, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Graph32 = Graph<f32>;
pub type Graph64 = Graph<f64>;
