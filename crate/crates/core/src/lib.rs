//! Time-fractional evolution equations driven by inverse subordinators:
//! Bernstein symbols, subordinator sampling, Laplace inversion, finite-volume
//! generators, spectral time-fractional solvers, Monte Carlo of time-changed
//! processes and form-convergence experiments.

// `!(x > 0.0)` is used on purpose so that NaN fails parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod bernstein;
pub mod cli;
pub mod config;
pub mod error;
pub mod generators;
pub mod invlap;
pub mod montecarlo;
pub mod mosco;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod subpaths;
pub mod timefrac;

pub use error::{Error, Result};
