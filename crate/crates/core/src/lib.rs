//! Random trigonometric feature networks and the closed-form kernels they
//! converge to.
//!
//! * [`kernel`]: closed-form kernels, Gram matrices and GP conditioning.
//! * [`network`]: shallow, cosine, phase-shifted and deep trig networks.
//! * [`bayes`]: Bayesian linear regression in trig feature space.
//! * [`gp`]: GP regression, marginal likelihood and hyperparameter search.
//! * [`distribution`]: marginal densities and characteristic functions.
//! * [`montecarlo`]: Monte Carlo estimators linking networks to kernels.

pub mod bayes;
pub mod distribution;
pub mod error;
pub mod gp;
pub mod kernel;
pub mod linalg;
pub mod montecarlo;
pub mod network;
pub mod rng;

pub use error::{Error, Result};
