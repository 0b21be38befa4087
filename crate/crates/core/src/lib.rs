//! A from-scratch 3D convolutional network engine for volumetric CT classification.
//!
//! The crate covers the whole pipeline: loading slice stacks and resampling them
//! to a fixed grid ([`volio`]), seeded stochastic augmentation ([`augment`]),
//! layer kernels with hand-written backward passes ([`layers`]), the detection
//! and severity network variants ([`model`]), losses and metrics
//! ([`metrics`]), optimizers and training-control state machines ([`optim`]),
//! and the end-to-end training loop ([`trainer`]).
//!
//! Tensors use the `(N, C, D, H, W)` axis order. Everything numeric is generic
//! over [`Scalar`], so the same kernels run at `f32` for training and at `f64`
//! for gradient checking.

pub mod augment;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod trainer;
pub mod volio;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Scalar, Tensor};
