//! Prompt-free instance unlearning for small diffusion models.
//!
//! The crate bundles everything needed to pretrain a desk-scale denoiser,
//! remove a single generated instance with a surrogate-guided forget loss,
//! and measure what the removal cost. A ridge-regression module provides
//! closed-form removal/replacement updates checked against retraining.

pub mod tensor;
pub mod ridge;
pub mod rng;
pub mod diffusion;
pub mod data;
pub mod denoiser;
pub mod surrogate;
pub mod unlearn;
pub mod metrics;
pub mod config;
pub mod checkpoint;
pub mod report;
pub mod harness;

pub use tensor::{DenseMatrix, DenseVector};
