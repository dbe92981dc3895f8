//! Regularized deconvolution closure for Hardy-Murdoch averages of a
//! periodic one-dimensional Lennard-Jones chain.
//!
//! The pipeline runs molecular dynamics ([`dynamics`]), forms windowed
//! averages and exact stresses ([`meso`]), deconvolves the averages with a
//! filtered SVD ([`regularize`]), reinserts reconstructed particles to obtain
//! approximate stresses ([`closure`]) and compares the two ([`spectral`],
//! [`bounds`], [`harness`]).

// `!(x > 0.0)` style checks reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod closure;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod meso;
pub mod quadrature;
pub mod regularize;
pub mod spectral;
pub mod windows;

pub use error::{Error, Result};
