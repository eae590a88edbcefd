//! Coupled Wasserstein auto-encoders and adversarial discriminators that share a
//! latent space, for unsupervised domain adaptation between image domains.
//!
//! This crate is `no_std` (with `alloc`). It carries the numerical parts of the
//! toolkit: tensors and a small reverse-mode autograd tape, the distance and
//! discrepancy library, the coupled networks, every loss term, Adam, and the
//! two alternating training steps (MMD penalty and latent-GAN penalty).
//! File formats, datasets and the command line live in the `xdomain` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;
mod gemm;
pub mod math;

pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod networks;
pub mod nn;
pub mod objectives;
pub mod optim;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use networks::{ArchConfig, Domain, NetworkBundle};
pub use objectives::{LossReport, LossWeights, Term};
pub use optim::{Adam, AdamConfig};
pub use tensor::Tensor;
pub use trainer::{PairedBatch, Schedule, Scheme, StepOptions, TrainState};
