//! Datasets, preprocessing, checkpoints, the training loop, evaluation and
//! the command line around `xdomain-core`.

pub mod checkpoint;
pub mod config;
pub mod datasets;
pub mod error;
pub mod evalharness;
pub mod imageio;
pub mod search;
pub mod selftest;
pub mod train;

pub use error::{Error, Result};
