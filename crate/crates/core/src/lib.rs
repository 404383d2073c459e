//! Fourier-analytic machinery for sets of well-approximable matrices.
//!
//! The crate covers the exponents and dimension values of an approximation
//! problem, matrix divisor sets and dyadic scale blocks, exact sparse spectra
//! of periodic bump sums on the torus, the multi-scale measure construction
//! with its decay envelope, and the slab/lattice verification harness.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod bump;
pub mod config;
pub mod divisor;
pub mod error;
pub mod lattice;
pub mod measure;
pub mod quadrature;
pub mod slab;
pub mod spectrum;
pub mod torus;

pub use error::{Error, Result};
