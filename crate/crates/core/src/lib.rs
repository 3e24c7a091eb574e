//! Model maps built from per-model log-likelihood vectors.
//!
//! Rows of a double-centered log-likelihood matrix place language models in a
//! common coordinate system where squared distance estimates KL divergence.
//! On top of that the crate provides divergence estimates with standard
//! errors, outlier scans, diffusion and Hölder exponent fits along training
//! trajectories, synthetic ground-truth generators, and low-dimensional
//! embeddings for plotting.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod divergence;
pub mod embed;
pub mod error;
pub mod fixture;
pub mod io;
pub mod matrix;
pub mod outlier;
pub mod pipeline;
pub mod plot;
pub mod scaling;
pub mod stats;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use matrix::{
    CenteredMap, Centering, ExpMap, LogLikelihoodMatrix, ModelMeta, RowMatrix, Scale, TextSetMeta,
};
