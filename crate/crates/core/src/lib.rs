//! Uncertainty-aware policy search for sim2real system identification.
//!
//! Bayesian optimisation searches the simulation-parameter cube for the
//! parameter whose conditioned policy performs best on a noisy "real" system.
//! Input noise is handled with the unscented transform (robust acquisition and
//! sigma-point action averaging); estimation uncertainty is handled by sampling
//! the optimum of random-Fourier-feature posterior draws and averaging the
//! policies at those optima.
//!
//! Modules, bottom-up:
//!
//! - [`gp`]: RBF Gaussian-process surrogate
//! - [`unscented`]: sigma points and the unscented mean
//! - [`acquisition`]: EI, unscented EI, acquisition maximization
//! - [`rff`]: Fourier-feature posterior draws and the optimal-parameter distribution
//! - [`env`]: mass-spring-damper simulator, noisy real twin, rollouts
//! - [`policy`]: LQR policy provider and the transfer-time action rules
//! - [`search`]: the policy-search loop and its method variants
//! - [`baselines`]: domain randomisation
//! - [`experiment`]: multi-seed experiment runner, config and result files
//!
//! See the crate's `examples/` directory for one runnable program per capability.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaN

pub mod acquisition;
pub mod baselines;
pub mod env;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod optimize;
pub mod policy;
pub mod rff;
pub mod rng;
pub mod search;
pub mod unscented;

pub use error::{Error, Result};

/// A point in the normalized simulation-parameter cube `[0,1]^d`.
pub type ParamVector = nalgebra::DVector<f64>;
