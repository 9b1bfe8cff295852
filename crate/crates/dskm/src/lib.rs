//! Doubly stochastic functional gradient descent for kernel machines.
//!
//! Kernel machines trained with two sources of randomness per iteration: a
//! random data batch and a random-feature block regenerated on demand from
//! a counter-based seed. Models store only coefficients and the seed, so
//! memory is O(t·r) regardless of input dimension.
//!
//! The kernel and loss math is generic over the scalar type ([`Real`], f32
//! or f64); the training pipeline and model files are pinned to f64. Use
//! the crate-root aliases ([`Kernel`], [`Loss`]) for the common case.

pub mod analysis;
pub mod baselines;
pub mod data;
pub mod error;
pub mod gp;
pub mod kernel;
pub mod linalg;
pub mod loss;
pub mod predictor;
pub mod scalar;
pub mod stream;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

/// f64 kernel specification, the pipeline's working type.
pub type Kernel = kernel::KernelSpec<f64>;
/// f64 loss specification.
pub type Loss = loss::LossSpec<f64>;
/// f64 training target.
pub type TargetValue = loss::Target<f64>;

pub use data::Dataset;
pub use trainer::{train, Model, TrainConfig, Trainer};
