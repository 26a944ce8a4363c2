//! Simulation and verification toolkit for matrix-valued fractional Brownian
//! motion and the eigenvalue processes it induces.

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod gaussian_paths;
pub mod harness;
pub mod matrix_ensemble;
pub mod spectral;
pub mod statistics;

pub use error::{Error, Result};
