//! Expected Improvement, its unscented (input-noise averaged) form, and
//! acquisition maximization over the unit cube.
//!
//! Everything here works in the GP's standardized output space, maximization
//! convention.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::optimize::{maximize_on_cube, MaximizeOptions, Objective};
use crate::rng::Rng;
use crate::unscented::{sigma_points_isotropic, unscented_mean, UtConfig};
use crate::ParamVector;

const MIN_STDDEV: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct AcquisitionContext<'a> {
    pub model: &'a GpModel,
    pub y_best: f64,
    /// Input-noise variance in normalized parameter units.
    pub noise_variance: f64,
    pub ut: UtConfig,
}

impl<'a> AcquisitionContext<'a> {
    /// Context with `y_best` taken as the best standardized training target.
    pub fn new(model: &'a GpModel, noise_variance: f64, k: f64) -> Result<Self> {
        if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
            return Err(Error::invalid(format!(
                "noise variance must be >= 0, got {noise_variance}"
            )));
        }
        Ok(AcquisitionContext {
            model,
            y_best: model.best_standardized_target(),
            noise_variance,
            ut: UtConfig::new(k, model.dim())?,
        })
    }
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Closed-form EI for a Gaussian with mean `mu` and standard deviation `s`.
pub fn ei_from_moments(mu: f64, s: f64, y_best: f64) -> f64 {
    let improvement = mu - y_best;
    if s < MIN_STDDEV {
        return improvement.max(0.0);
    }
    let z = improvement / s;
    (improvement * normal_cdf(z) + s * normal_pdf(z)).max(0.0)
}

pub fn expected_improvement(ctx: &AcquisitionContext<'_>, x: &ParamVector) -> Result<f64> {
    let (mu, var) = ctx.model.posterior_standardized(x)?;
    Ok(ei_from_moments(mu, var.sqrt(), ctx.y_best))
}

/// EI averaged over the sigma points of `N(x, I·σ²)`, clamped to the cube.
pub fn unscented_ei(ctx: &AcquisitionContext<'_>, x: &ParamVector) -> Result<f64> {
    if ctx.noise_variance == 0.0 {
        return expected_improvement(ctx, x);
    }
    let sp = sigma_points_isotropic(x, ctx.noise_variance, ctx.ut.k)?.clamp_to_cube();
    unscented_mean(|p| expected_improvement(ctx, p), &sp)
}

/// Maximize `acq` over `[0,1]^d` with `restarts` uniform restarts of local ascent.
pub fn maximize_acquisition<O: Objective + ?Sized>(
    acq: &O,
    d: usize,
    restarts: usize,
    rng: &mut Rng,
) -> Result<ParamVector> {
    let opts = MaximizeOptions {
        restarts,
        ..MaximizeOptions::default()
    };
    maximize_on_cube(acq, d, &opts, rng)
}
