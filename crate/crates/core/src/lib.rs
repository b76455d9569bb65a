//! Perceiver image classifier with uncertainty-aware training strategies
//! (deep ensembles, SWA, snapshot and fast ensembles, Monte Carlo input
//! dropout) and a calibration-metric suite.
//!
//! Everything runs on a small dense-tensor engine with reverse-mode
//! differentiation in 64-bit floats. All randomness is derived from explicit
//! seeds, so every run is bit-reproducible.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autograd;
pub mod data;
pub mod error;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod rng;
pub mod schedule;
pub mod strategies;
pub mod tensor;

pub use error::{Error, Result};
pub use image::Image;
pub use params::ParamStore;
pub use tensor::Tensor;
