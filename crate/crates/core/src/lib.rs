//! Text-guided image restoration with agent attention.
//!
//! The crate is generic over the element type through [`Scalar`]; the
//! aliases at the bottom of this file name the common instantiations.

pub mod attention;
pub mod autodiff;
pub mod bench;
pub mod blocks;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod tensor;
pub mod text;

pub use autodiff::{Gradients, Graph, Var};
pub use error::{Error, Result};
pub use kernels::Conv2dSpec;
pub use model::{ModelConfig, RestorationOutput, TransRfir};
pub use nn::{Init, Module, Param};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Graph64 = Graph<f64>;
pub type Graph32 = Graph<f32>;
pub type TransRfir64 = TransRfir<f64>;
pub type TransRfir32 = TransRfir<f32>;
