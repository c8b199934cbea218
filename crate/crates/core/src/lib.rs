//! Counterfactual regression for high-dimensional covariates and
//! high-cardinality (optionally dosage-structured) treatments.
//!
//! The numeric modules are generic over [`Scalar`] (`f32`/`f64`); the
//! aliases below fix the scalar to `f64`, which is what the experiment
//! front end uses.

pub mod datagen;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod ndnet;
pub mod outcomes;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use outcomes::OutcomeTensor;
pub use scalar::Scalar;
pub use tensor::Tensor2;

pub type Tensor = Tensor2<f64>;
pub type Tensor32 = Tensor2<f32>;
pub type Network = ndnet::Mlp<f64>;
pub type Params = model::HiCiParams<f64>;
pub type Params32 = model::HiCiParams<f32>;
pub type Propensity = losses::PropensityModel<f64>;
