//! A from-scratch convolutional network library for classifying the
//! preparation state of cooking objects (diced, sliced, whole, …).
//!
//! Layers carry hand-derived backward passes checked against finite
//! differences; training, augmentation and evaluation are deterministic under
//! a seed.

pub mod data;
pub mod error;
pub mod fsutil;
pub mod init;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{DType, Scalar, Tensor};
