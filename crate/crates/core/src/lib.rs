//! Triplet metric learning of low-dimensional image embeddings.
//!
//! A small VGG-style convolutional network maps single-channel images to
//! points in `R^d`. It is trained from similarity triplets derived from
//! ordinal extent scores with a clipped triplet loss, and evaluated by the
//! fraction of test triplets its embedding violates.

pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod loss;
pub mod nn;
pub mod rng;
pub mod sampling;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
