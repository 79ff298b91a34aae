//! Exact distributional characterization of the Lasso under correlated
//! Gaussian designs.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: covariance models, random-design sampling, residualized features.
//! * [`solvers`]: coordinate descent for the random-design Lasso and the
//!   fixed-design proximal problem, plus Huber-smoothed variants.
//! * [`fixed_point`]: Monte Carlo and closed-form risk/df maps, the (τ*, ζ*)
//!   solver, and the ω*(ε) curve.
//! * [`inference`]: degrees-of-freedom adjusted debiasing, intervals, and exact
//!   leave-one-out tests.
//! * [`width`]: Monte Carlo standard Gaussian width of signed-support cones.
//! * [`experiments`]: config-driven simulation runs emitting CSV tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod fixed_point;
pub mod inference;
pub mod io;
pub mod model;
pub mod seed;
pub mod solvers;
pub mod stats;
pub mod width;

pub use error::{Error, Result};
