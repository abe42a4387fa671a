//! Random Fourier feature linearization of the RBF GP and sampling of the
//! distribution of optimal parameters.
//!
//! A feature map `φ(θ) = a·√(2/m)·[cos(ωᵢᵀθ + bᵢ)]` with `ω ~ N(0, I/ℓ²)`,
//! `b ~ U[0, 2π]` and amplitude `a = √signal_variance` satisfies
//! `E[φ(x)ᵀφ(y)] = k(x, y)`. Under a unit Gaussian prior on the weights, the
//! posterior given standardized targets `y` is
//! `ŵ | D ~ N(A⁻¹Φᵀy, σ²A⁻¹)` with `A = ΦᵀΦ + σ²I`.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gp::{cholesky_with_jitter, GpHyperparams, ObservationSet, Standardizer};
use crate::optimize::{maximize_on_cube, LocalMethod, MaximizeOptions, Objective};
use crate::rng::{derive_rng, Rng};
use crate::ParamVector;

pub const DEFAULT_FEATURES: usize = 2000;
pub const DEFAULT_SAMPLES: usize = 250;
pub const DEFAULT_SAMPLE_RESTARTS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct RffMap {
    /// One frequency per row, `m × d`.
    omegas: DMatrix<f64>,
    phases: DVector<f64>,
    amplitude: f64,
}

impl RffMap {
    /// Map with unit amplitude from explicit frequencies (rows) and phases.
    pub fn from_parts(omegas: DMatrix<f64>, phases: DVector<f64>) -> Result<Self> {
        if omegas.nrows() == 0 || omegas.nrows() != phases.len() {
            return Err(Error::invalid("need one phase per frequency and at least one feature"));
        }
        if phases.iter().any(|b| !(0.0..=std::f64::consts::TAU).contains(b)) {
            return Err(Error::invalid("phases must lie in [0, 2π]"));
        }
        Ok(RffMap {
            omegas,
            phases,
            amplitude: 1.0,
        })
    }

    pub fn num_features(&self) -> usize {
        self.phases.len()
    }

    pub fn dim(&self) -> usize {
        self.omegas.ncols()
    }

    pub fn omegas(&self) -> &DMatrix<f64> {
        &self.omegas
    }

    pub fn phases(&self) -> &DVector<f64> {
        &self.phases
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    fn scale(&self) -> f64 {
        self.amplitude * (2.0 / self.num_features() as f64).sqrt()
    }

    fn check_dim(&self, theta: &ParamVector) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::invalid(format!(
                "feature input has dimension {}, map expects {}",
                theta.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Arguments `ωᵢᵀθ + bᵢ` for every feature.
    fn arguments(&self, theta: &ParamVector) -> DVector<f64> {
        let mut z = &self.omegas * theta;
        z += &self.phases;
        z
    }

    pub fn features(&self, theta: &ParamVector) -> Result<DVector<f64>> {
        self.check_dim(theta)?;
        let scale = self.scale();
        Ok(self.arguments(theta).map(|z| scale * z.cos()))
    }

    /// Feature matrix with one row per observation.
    pub fn design_matrix(&self, thetas: &[ParamVector]) -> Result<DMatrix<f64>> {
        let mut phi = DMatrix::zeros(thetas.len(), self.num_features());
        for (r, t) in thetas.iter().enumerate() {
            phi.row_mut(r).tr_copy_from(&self.features(t)?);
        }
        Ok(phi)
    }
}

pub fn sample_rff_map(h: &GpHyperparams, d: usize, m: usize, rng: &mut Rng) -> Result<RffMap> {
    h.validate()?;
    if m == 0 || d == 0 {
        return Err(Error::invalid("feature count and dimension must be positive"));
    }
    let inv_l = 1.0 / h.lengthscale;
    let omegas = DMatrix::from_fn(m, d, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * inv_l
    });
    let phases = DVector::from_fn(m, |_, _| rng.random::<f64>() * std::f64::consts::TAU);
    Ok(RffMap {
        omegas,
        phases,
        amplitude: h.signal_variance.sqrt(),
    })
}

/// One approximate GP draw `θ ↦ φ(θ)ᵀŵ` (standardized units).
#[derive(Debug, Clone)]
pub struct LinearGpSample {
    map: RffMap,
    weights: DVector<f64>,
    standardizer: Standardizer,
}

impl LinearGpSample {
    pub fn new(map: RffMap, weights: DVector<f64>, standardizer: Standardizer) -> Result<Self> {
        if weights.len() != map.num_features() {
            return Err(Error::invalid("weight dimension must equal the feature count"));
        }
        Ok(LinearGpSample {
            map,
            weights,
            standardizer,
        })
    }

    pub fn map(&self) -> &RffMap {
        &self.map
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// `φ(θ)ᵀŵ` in standardized units.
    pub fn latent(&self, theta: &ParamVector) -> Result<f64> {
        Ok(self.map.features(theta)?.dot(&self.weights))
    }

    /// The draw in the original reward units.
    pub fn predict(&self, theta: &ParamVector) -> Result<f64> {
        Ok(self.standardizer.inverse(self.latent(theta)?))
    }
}

impl Objective for LinearGpSample {
    fn value(&self, x: &ParamVector) -> Result<f64> {
        self.latent(x)
    }

    fn value_and_gradient(&self, x: &ParamVector) -> Result<(f64, ParamVector)> {
        self.map.check_dim(x)?;
        let scale = self.map.scale();
        let z = self.map.arguments(x);
        let mut value = 0.0;
        // ∂/∂θ Σ wᵢ·s·cos(zᵢ) = −Σ wᵢ·s·sin(zᵢ)·ωᵢ
        let mut coeff = DVector::zeros(z.len());
        for i in 0..z.len() {
            let (sin, cos) = z[i].sin_cos();
            value += self.weights[i] * cos;
            coeff[i] = -self.weights[i] * sin;
        }
        let grad = self.map.omegas.tr_mul(&coeff) * scale;
        Ok((value * scale, grad))
    }
}

fn standardized_targets(data: &ObservationSet) -> (Standardizer, DVector<f64>) {
    let s = Standardizer::fit(data.ys());
    let y = DVector::from_iterator(data.len(), data.ys().iter().map(|&v| s.forward(v)));
    (s, y)
}

fn check_posterior_inputs(map: &RffMap, data: &ObservationSet, noise_variance: f64) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("posterior weights need at least one observation"));
    }
    if data.dim() != map.dim() {
        return Err(Error::invalid("observation and feature-map dimensions differ"));
    }
    if !(noise_variance > 0.0) || !noise_variance.is_finite() {
        return Err(Error::invalid(format!(
            "noise variance must be > 0, got {noise_variance}"
        )));
    }
    Ok(())
}

/// Posterior mean `A⁻¹Φᵀy`, computed in observation space as `Φᵀ(ΦΦᵀ + σ²I)⁻¹y`.
pub fn posterior_weight_mean(map: &RffMap, data: &ObservationSet, noise_variance: f64) -> Result<DVector<f64>> {
    check_posterior_inputs(map, data, noise_variance)?;
    let (_, y) = standardized_targets(data);
    let phi = map.design_matrix(data.thetas())?;
    let chol = observation_space_factor(&phi, noise_variance)?;
    Ok(phi.tr_mul(&chol.solve(&y)))
}

fn observation_space_factor(phi: &DMatrix<f64>, noise_variance: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let mut c = phi * phi.transpose();
    for i in 0..c.nrows() {
        c[(i, i)] += noise_variance;
    }
    Ok(cholesky_with_jitter(c)?.0)
}

/// Draw `ŵ ~ N(A⁻¹Φᵀy, σ²A⁻¹)` exactly.
///
/// Uses the pathwise form `ŵ = w₀ + Φᵀ(ΦΦᵀ + σ²I)⁻¹(y − Φw₀ − ε)` with
/// `w₀ ~ N(0, I)`, `ε ~ N(0, σ²I)`, which needs an `n × n` solve instead of
/// an `m × m` one.
pub fn sample_posterior_weights(
    map: &RffMap,
    data: &ObservationSet,
    noise_variance: f64,
    rng: &mut Rng,
) -> Result<LinearGpSample> {
    check_posterior_inputs(map, data, noise_variance)?;
    let (standardizer, y) = standardized_targets(data);
    let phi = map.design_matrix(data.thetas())?;
    let chol = observation_space_factor(&phi, noise_variance)?;

    let m = map.num_features();
    let prior: DVector<f64> = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
    let noise_sd = noise_variance.sqrt();
    let eps: DVector<f64> = DVector::from_fn(y.len(), |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * noise_sd
    });
    let residual = &y - &phi * &prior - eps;
    let weights = prior + phi.tr_mul(&chol.solve(&residual));
    LinearGpSample::new(map.clone(), weights, standardizer)
}

/// Samples `θ*⁽ⁱ⁾ = argmax φ⁽ⁱ⁾(θ)ᵀŵ⁽ⁱ⁾`, one per posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalParamSet {
    samples: Vec<ParamVector>,
}

impl OptimalParamSet {
    pub fn new(samples: Vec<ParamVector>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("optimal parameter set must not be empty"));
        }
        let d = samples[0].len();
        if samples.iter().any(|s| s.len() != d) {
            return Err(Error::invalid("optimal parameter samples differ in dimension"));
        }
        if samples.iter().flat_map(|s| s.iter()).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("optimal parameter samples must lie in the unit cube"));
        }
        Ok(OptimalParamSet { samples })
    }

    pub fn samples(&self) -> &[ParamVector] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn mean(&self) -> ParamVector {
        let mut acc = DVector::zeros(self.dim());
        for s in &self.samples {
            acc += s;
        }
        acc / self.samples.len() as f64
    }

    /// Mean over components of the unbiased per-component sample variance.
    pub fn isotropic_variance(&self) -> Result<f64> {
        let n = self.samples.len();
        if n < 2 {
            return Err(Error::invalid("variance needs at least two samples"));
        }
        let mean = self.mean();
        let total: f64 = self.samples.iter().map(|s| (s - &mean).norm_squared()).sum();
        Ok(total / ((n - 1) as f64 * self.dim() as f64))
    }
}

/// Estimate the distribution of the optimal parameter under the GP posterior.
///
/// Each of the `n_samples` draws builds a fresh `m_features` map, samples
/// posterior weights and maximizes the resulting function on the cube. Draw
/// `i` uses its own stream derived from one value taken from `rng`, so the
/// result is ordered by sample index and independent of evaluation order.
pub fn opt_latent_dist(
    data: &ObservationSet,
    n_samples: usize,
    m_features: usize,
    h: &GpHyperparams,
    rng: &mut Rng,
) -> Result<OptimalParamSet> {
    if data.is_empty() {
        return Err(Error::invalid("need at least one observation"));
    }
    if n_samples == 0 || m_features == 0 {
        return Err(Error::invalid("sample and feature counts must be positive"));
    }
    let base: u64 = rng.random();
    let opts = MaximizeOptions {
        restarts: DEFAULT_SAMPLE_RESTARTS,
        method: LocalMethod::Bfgs,
        ..MaximizeOptions::default()
    };
    let samples = (0..n_samples)
        .map(|i| {
            let mut sub = derive_rng(base, "opt-latent", i as u64);
            let map = sample_rff_map(h, data.dim(), m_features, &mut sub)?;
            let draw = sample_posterior_weights(&map, data, h.noise_variance, &mut sub)?;
            maximize_on_cube(&draw, data.dim(), &opts, &mut sub)
        })
        .enumerate()
        .map(|(i, r)| r.map_err(|e| e.at("posterior sample", i)))
        .collect::<Result<Vec<_>>>()?;
    OptimalParamSet::new(samples)
}
