//! Gaussian-process regression with an RBF kernel.
//!
//! Targets are standardized to zero mean and unit (population) variance inside
//! the model. [`GpModel::posterior`] reports in the original reward units, while
//! [`GpModel::posterior_standardized`] and [`GpModel::best_standardized_target`]
//! expose the scale-free space the acquisition functions work in.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{maximize_on_cube, MaximizeOptions};
use crate::rng::Rng;
use crate::ParamVector;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Default for GpHyperparams {
    fn default() -> Self {
        GpHyperparams {
            lengthscale: 0.2,
            signal_variance: 1.0,
            noise_variance: 1e-4,
        }
    }
}

impl GpHyperparams {
    pub fn new(lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let h = GpHyperparams {
            lengthscale,
            signal_variance,
            noise_variance,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::invalid(format!(
                "lengthscale must be > 0, got {}",
                self.lengthscale
            )));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::invalid(format!(
                "signal variance must be > 0, got {}",
                self.signal_variance
            )));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be >= 0, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }
}

/// How the surrogate's hyperparameters are chosen each time it is refit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HyperparamMode {
    Fixed(GpHyperparams),
    /// Multi-restart evidence maximization over log-scaled boxes.
    Evidence {
        restarts: usize,
    },
}

impl Default for HyperparamMode {
    fn default() -> Self {
        HyperparamMode::Fixed(GpHyperparams::default())
    }
}

/// BO dataset: simulation parameters in the unit cube and their observed rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    dim: usize,
    thetas: Vec<ParamVector>,
    ys: Vec<f64>,
}

impl ObservationSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("observation dimension must be positive"));
        }
        Ok(ObservationSet {
            dim,
            thetas: Vec::new(),
            ys: Vec::new(),
        })
    }

    pub fn from_pairs<I>(dim: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (ParamVector, f64)>,
    {
        let mut set = Self::new(dim)?;
        for (theta, y) in pairs {
            set.push(theta, y)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, theta: ParamVector, y: f64) -> Result<()> {
        if theta.len() != self.dim {
            return Err(Error::invalid(format!(
                "observation has dimension {}, expected {}",
                theta.len(),
                self.dim
            )));
        }
        if theta.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("observation lies outside the unit cube"));
        }
        if !y.is_finite() {
            return Err(Error::invalid("observed reward is not finite"));
        }
        self.thetas.push(theta);
        self.ys.push(y);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn thetas(&self) -> &[ParamVector] {
        &self.thetas
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// Index of the largest observed y; the earliest wins ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &y) in self.ys.iter().enumerate() {
            match best {
                Some(b) if self.ys[b] >= y => {}
                _ => best = Some(i),
            }
        }
        best
    }
}

/// Affine map between raw rewards and the zero-mean, unit-variance space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    /// Population statistics of `ys`; a zero spread falls back to unit scale.
    pub fn fit(ys: &[f64]) -> Self {
        let n = ys.len().max(1) as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Standardizer {
            mean,
            std: if std > 1e-12 { std } else { 1.0 },
        }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

pub(crate) fn squared_distance(x: &ParamVector, y: &ParamVector) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `signal_variance · exp(−‖x−y‖² / (2·lengthscale²))`.
pub fn rbf_kernel(x: &ParamVector, y: &ParamVector, h: &GpHyperparams) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "kernel inputs have dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    h.validate()?;
    Ok(rbf_unchecked(x, y, h))
}

#[inline]
fn rbf_unchecked(x: &ParamVector, y: &ParamVector, h: &GpHyperparams) -> f64 {
    h.signal_variance * (-squared_distance(x, y) / (2.0 * h.lengthscale * h.lengthscale)).exp()
}

/// Gram matrix `K` over the training inputs (no noise term).
pub fn kernel_matrix(thetas: &[ParamVector], h: &GpHyperparams) -> DMatrix<f64> {
    let n = thetas.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = h.signal_variance;
        for j in 0..i {
            let v = rbf_unchecked(&thetas[i], &thetas[j], h);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky with escalating diagonal jitter. Returns the factor and the jitter used.
pub(crate) fn cholesky_with_jitter(m: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok((c, 0.0));
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * 1.000_001 {
        let mut shifted = m.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::numerical(format!(
        "matrix is not positive definite even with jitter {JITTER_MAX:e}"
    )))
}

/// A GP conditioned on an [`ObservationSet`]. Immutable after fitting.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyperparams: GpHyperparams,
    data: ObservationSet,
    standardizer: Standardizer,
    targets: DVector<f64>,
    factor: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpModel {
    pub fn fit(data: &ObservationSet, h: GpHyperparams) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("cannot fit a GP to an empty observation set"));
        }
        h.validate()?;
        let standardizer = Standardizer::fit(data.ys());
        let targets = DVector::from_iterator(data.len(), data.ys().iter().map(|&y| standardizer.forward(y)));

        let mut gram = kernel_matrix(data.thetas(), &h);
        for i in 0..data.len() {
            gram[(i, i)] += h.noise_variance;
        }
        let (chol, jitter) = cholesky_with_jitter(gram)?;
        let alpha = chol.solve(&targets);
        Ok(GpModel {
            hyperparams: h,
            data: data.clone(),
            standardizer,
            targets,
            factor: chol.unpack(),
            alpha,
            jitter,
        })
    }

    /// Refit with hyperparameters chosen by `mode`.
    pub fn fit_with_mode(data: &ObservationSet, mode: &HyperparamMode, rng: &mut Rng) -> Result<Self> {
        match mode {
            HyperparamMode::Fixed(h) => Self::fit(data, *h),
            HyperparamMode::Evidence { restarts } => Self::fit_max_evidence(data, *restarts, rng),
        }
    }

    /// Maximize the log evidence over log-uniform boxes for the three hyperparameters.
    pub fn fit_max_evidence(data: &ObservationSet, restarts: usize, rng: &mut Rng) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("cannot fit a GP to an empty observation set"));
        }
        let bounds = EvidenceBounds::default();
        let objective = |u: &ParamVector| -> Result<f64> {
            let h = bounds.decode(u);
            GpModel::fit(data, h).and_then(|m| m.log_marginal_likelihood())
        };
        let opts = MaximizeOptions {
            restarts: restarts.max(1),
            ..MaximizeOptions::default()
        };
        let best = maximize_on_cube(&objective, 3, &opts, rng)?;
        Self::fit(data, bounds.decode(&best))
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyperparams
    }

    pub fn data(&self) -> &ObservationSet {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn standardizer(&self) -> Standardizer {
        self.standardizer
    }

    pub fn standardized_targets(&self) -> &DVector<f64> {
        &self.targets
    }

    /// Lower-triangular factor `L` with `L·Lᵀ = K + σ_N² I (+ jitter)`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Largest training target in standardized units (`y_best` for EI).
    pub fn best_standardized_target(&self) -> f64 {
        self.targets.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn check_dim(&self, x: &ParamVector) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "query has dimension {}, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Posterior mean and variance in standardized output units.
    pub fn posterior_standardized(&self, x: &ParamVector) -> Result<(f64, f64)> {
        self.check_dim(x)?;
        let h = &self.hyperparams;
        let kx = DVector::from_iterator(
            self.data.len(),
            self.data.thetas().iter().map(|t| rbf_unchecked(t, x, h)),
        );
        let mean = kx.dot(&self.alpha);
        let v = self
            .factor
            .solve_lower_triangular(&kx)
            .ok_or_else(|| Error::numerical("singular Cholesky factor"))?;
        let var = (h.signal_variance - v.norm_squared()).max(0.0);
        Ok((mean, var))
    }

    /// Posterior mean and variance in the original reward units.
    pub fn posterior(&self, x: &ParamVector) -> Result<(f64, f64)> {
        let (m, v) = self.posterior_standardized(x)?;
        let s = self.standardizer;
        Ok((s.inverse(m), v * s.std * s.std))
    }

    /// Log evidence of the standardized targets under the fitted hyperparameters.
    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        let n = self.targets.len() as f64;
        let mut log_det_half = 0.0;
        for i in 0..self.factor.nrows() {
            let d = self.factor[(i, i)];
            if !(d > 0.0) {
                return Err(Error::numerical("invalid Cholesky factor diagonal"));
            }
            log_det_half += d.ln();
        }
        Ok(-0.5 * self.targets.dot(&self.alpha) - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
    }
}

/// Log-space search boxes used by evidence maximization.
#[derive(Debug, Clone, Copy)]
struct EvidenceBounds {
    lengthscale: (f64, f64),
    signal_variance: (f64, f64),
    noise_variance: (f64, f64),
}

impl Default for EvidenceBounds {
    fn default() -> Self {
        EvidenceBounds {
            lengthscale: (0.02, 5.0),
            signal_variance: (0.05, 20.0),
            noise_variance: (1e-6, 1.0),
        }
    }
}

impl EvidenceBounds {
    fn decode(&self, u: &ParamVector) -> GpHyperparams {
        let map = |(lo, hi): (f64, f64), t: f64| (lo.ln() + t.clamp(0.0, 1.0) * (hi.ln() - lo.ln())).exp();
        GpHyperparams {
            lengthscale: map(self.lengthscale, u[0]),
            signal_variance: map(self.signal_variance, u[1]),
            noise_variance: map(self.noise_variance, u[2]),
        }
    }
}
