//! Spectral-Galerkin simulation of impulsive neutral stochastic evolution
//! equations with delay, driven by Q-Wiener noise.
//!
//! The state space is a finite set of eigenmodes of a diagonal generator
//! `A e_k = -mu_k e_k`. On top of that sit approximating generator families,
//! a counter-based noise source, the mild-solution stepper and Monte Carlo
//! harnesses for convergence experiments.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approximants;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod model;
pub mod solver;
pub mod spectral;
pub mod stochastics;

pub use error::{Error, Result};
