//! Lightweight dual-path residual shrinkage network for automatic
//! modulation classification.
//!
//! The crate is self-contained: a small reverse-mode autodiff engine
//! ([`autodiff`]), the layers built on it ([`nn`]), learnable garrote and
//! soft thresholding blocks ([`shrinkage`]), a synthetic I/Q dataset
//! generator with its `SIGSET` file format ([`signal`]), the dual-input
//! classifier with parameter and FLOP accounting ([`model`]), and the
//! training/evaluation harness ([`train`]).

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod nn;
pub mod shrinkage;
pub mod signal;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
