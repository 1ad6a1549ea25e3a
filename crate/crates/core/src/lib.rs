//! Latent position model for multivariate Poisson count time series.
//!
//! Cross-series dependence is driven by distances between time-varying latent
//! positions. The crate covers simulation, posterior evaluation with analytic
//! gradients, MAP estimation (L-BFGS), Hamiltonian Monte Carlo, Procrustes
//! post-processing, convergence diagnostics and latent-space summaries.

// Validation throughout uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod inference;
pub mod model;
pub mod postprocess;
pub mod simulator;
pub mod stability;

pub use error::{Error, Result};
