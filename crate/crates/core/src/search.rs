//! The Bayesian-optimisation policy search and its method variants.
//!
//! Every evaluation rolls the variant's action rule out in the real world for
//! a fixed-initial-state window and records the cumulative reward. After the
//! budget is spent the search is finalized into a [`PolicySpec`]:
//!
//! | variant      | acquisition | search actions | final policy                  |
//! |--------------|-------------|----------------|-------------------------------|
//! | `StandardBO` | EI          | plain          | plain at best observed θ      |
//! | `UncAPS-EP`  | UEI         | UAS            | UAS at best observed θ        |
//! | `UncAPS+GA`  | UEI         | UAS            | UAS on a Gaussian fit to Θ*   |
//! | `UncAPS`     | UEI         | UAS            | average over Θ*               |

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::acquisition::{expected_improvement, maximize_acquisition, unscented_ei, AcquisitionContext};
use crate::env::{rollout, Environment, EpisodeConfig, InitialState, RealWorldSpec};
use crate::error::{Error, Result};
use crate::gp::{GpHyperparams, GpModel, HyperparamMode, ObservationSet};
use crate::policy::{PolicyProvider, PolicySpec};
use crate::rff::{opt_latent_dist, OptimalParamSet, DEFAULT_FEATURES, DEFAULT_SAMPLES};
use crate::rng::{derive_rng, derive_seed};
use crate::unscented::DEFAULT_K;
use crate::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "StandardBO")]
    StandardBo,
    #[serde(rename = "UncAPS-EP")]
    UncapsMinusEp,
    #[serde(rename = "UncAPS+GA")]
    UncapsPlusGa,
    #[serde(rename = "UncAPS")]
    Uncaps,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::StandardBo,
        Variant::UncapsMinusEp,
        Variant::UncapsPlusGa,
        Variant::Uncaps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::StandardBo => "StandardBO",
            Variant::UncapsMinusEp => "UncAPS-EP",
            Variant::UncapsPlusGa => "UncAPS+GA",
            Variant::Uncaps => "UncAPS",
        }
    }

    /// Whether the variant accounts for input noise (UEI + UAS).
    pub fn is_unscented(self) -> bool {
        self != Variant::StandardBo
    }

    /// Whether finalization estimates the optimal-parameter distribution.
    pub fn uses_epistemic(self) -> bool {
        matches!(self, Variant::Uncaps | Variant::UncapsPlusGa)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// BO iterations after the initial design.
    pub iterations: usize,
    pub n_init: usize,
    pub variant: Variant,
    /// Assumed input-noise variance σ² (normalized parameter units).
    pub noise_variance: f64,
    pub k: f64,
    /// Optimal-parameter samples drawn at finalization.
    pub n_samples: usize,
    /// Fourier features per posterior draw.
    pub n_features: usize,
    pub hyperparams: HyperparamMode,
    /// Evaluation window length in steps.
    pub window: usize,
    pub acquisition_restarts: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            iterations: 25,
            n_init: 3,
            variant: Variant::Uncaps,
            noise_variance: 0.01,
            k: DEFAULT_K,
            n_samples: DEFAULT_SAMPLES,
            n_features: DEFAULT_FEATURES,
            hyperparams: HyperparamMode::default(),
            window: 100,
            acquisition_restarts: 50,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.n_init == 0 {
            return Err(Error::invalid("iterations and n_init must be at least 1"));
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return Err(Error::invalid("noise variance must be >= 0"));
        }
        if self.window == 0 || self.acquisition_restarts == 0 {
            return Err(Error::invalid("window and acquisition restarts must be positive"));
        }
        if self.variant.uses_epistemic() && (self.n_samples == 0 || self.n_features == 0) {
            return Err(Error::invalid("sample and feature counts must be positive"));
        }
        if self.variant == Variant::UncapsPlusGa && self.n_samples < 2 {
            return Err(Error::invalid("UncAPS+GA needs at least two optimal-parameter samples"));
        }
        if let HyperparamMode::Fixed(h) = &self.hyperparams {
            h.validate()?;
        }
        Ok(())
    }

    /// The action rule used to evaluate a suggestion during search.
    pub fn search_policy(&self, theta: ParamVector) -> PolicySpec {
        if self.variant.is_unscented() {
            PolicySpec::Unscented {
                theta,
                variance: self.noise_variance,
                k: self.k,
            }
        } else {
            PolicySpec::Plain(theta)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub theta: ParamVector,
    pub y: f64,
    pub best_y: f64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct SearchTrace {
    pub variant: Variant,
    pub records: Vec<TraceRecord>,
    pub data: ObservationSet,
    /// Hyperparameters of the final surrogate fit (used for Θ* when applicable).
    pub final_hyperparams: GpHyperparams,
    pub optimal_set: Option<OptimalParamSet>,
    pub final_policy: PolicySpec,
    /// Real-world evaluation windows consumed.
    pub evaluations: usize,
}

impl SearchTrace {
    pub fn best_index(&self) -> usize {
        self.data.argmax().expect("trace has at least one record")
    }

    pub fn best_theta(&self) -> &ParamVector {
        &self.data.thetas()[self.best_index()]
    }

    pub fn best_y(&self) -> f64 {
        self.data.ys()[self.best_index()]
    }
}

struct Evaluator<'a, P: PolicyProvider + ?Sized> {
    cfg: &'a SearchConfig,
    provider: &'a P,
    world: &'a RealWorldSpec,
    count: usize,
}

impl<P: PolicyProvider + ?Sized> Evaluator<'_, P> {
    fn evaluate(&mut self, theta: &ParamVector) -> Result<f64> {
        let index = self.count;
        self.count += 1;
        let spec = self.cfg.search_policy(theta.clone());
        let episode = EpisodeConfig {
            horizon: self.cfg.window,
            initial: InitialState::Fixed(self.world.plant().initial_state().clone()),
            seed: derive_seed(self.cfg.seed, "evaluation", index as u64),
        };
        rollout(self.world, &spec.bind(self.provider), &episode)
    }
}

/// Run the search end to end, including finalization.
pub fn policy_search<P: PolicyProvider + ?Sized>(
    cfg: &SearchConfig,
    provider: &P,
    world: &RealWorldSpec,
) -> Result<SearchTrace> {
    cfg.validate()?;
    let d = world.plant().dim();
    if provider.dim() != d {
        return Err(Error::invalid(format!(
            "provider has dimension {}, world has {d}",
            provider.dim()
        )));
    }
    let mut eval = Evaluator {
        cfg,
        provider,
        world,
        count: 0,
    };
    let mut data = ObservationSet::new(d)?;
    let mut records: Vec<TraceRecord> = Vec::with_capacity(cfg.n_init + cfg.iterations);
    let mut push = |data: &mut ObservationSet, theta: ParamVector, y: f64, started: Instant| -> Result<()> {
        let best_y = records.last().map_or(y, |r| r.best_y.max(y));
        records.push(TraceRecord {
            iteration: records.len(),
            theta: theta.clone(),
            y,
            best_y,
            wall_time: started.elapsed(),
        });
        data.push(theta, y)
    };

    let mut init_rng = derive_rng(cfg.seed, "initial-design", 0);
    for i in 0..cfg.n_init {
        let started = Instant::now();
        let theta = DVector::from_fn(d, |_, _| init_rng.random::<f64>());
        let y = eval.evaluate(&theta).map_err(|e| e.at("initial evaluation", i))?;
        push(&mut data, theta, y, started)?;
    }

    let acq_noise = if cfg.variant.is_unscented() {
        cfg.noise_variance
    } else {
        0.0
    };
    for t in 0..cfg.iterations {
        let started = Instant::now();
        let step = || -> Result<ParamVector> {
            let gp = GpModel::fit_with_mode(
                &data,
                &cfg.hyperparams,
                &mut derive_rng(cfg.seed, "hyperparams", t as u64),
            )?;
            let ctx = AcquisitionContext::new(&gp, acq_noise, cfg.k)?;
            let mut rng = derive_rng(cfg.seed, "acquisition", t as u64);
            if cfg.variant.is_unscented() {
                maximize_acquisition(
                    &|x: &ParamVector| unscented_ei(&ctx, x),
                    d,
                    cfg.acquisition_restarts,
                    &mut rng,
                )
            } else {
                maximize_acquisition(
                    &|x: &ParamVector| expected_improvement(&ctx, x),
                    d,
                    cfg.acquisition_restarts,
                    &mut rng,
                )
            }
        };
        let theta = step().map_err(|e| e.at("BO iteration", t))?;
        let y = eval.evaluate(&theta).map_err(|e| e.at("BO iteration", t))?;
        push(&mut data, theta, y, started)?;
    }

    let final_gp = GpModel::fit_with_mode(
        &data,
        &cfg.hyperparams,
        &mut derive_rng(cfg.seed, "hyperparams", cfg.iterations as u64),
    )
    .map_err(|e| e.at("final surrogate fit", cfg.iterations))?;
    let final_hyperparams = *final_gp.hyperparams();
    let optimal_set = if cfg.variant.uses_epistemic() {
        let mut rng = derive_rng(cfg.seed, "optimal-latent", 0);
        let mut h = final_hyperparams;
        // posterior weight sampling needs strictly positive observation noise
        h.noise_variance = h.noise_variance.max(1e-10);
        Some(opt_latent_dist(&data, cfg.n_samples, cfg.n_features, &h, &mut rng)?)
    } else {
        None
    };

    let mut trace = SearchTrace {
        variant: cfg.variant,
        records,
        data,
        final_hyperparams,
        optimal_set,
        final_policy: PolicySpec::Plain(DVector::zeros(d)),
        evaluations: eval.count,
    };
    trace.final_policy = final_policy(&trace, cfg)?;
    Ok(trace)
}

/// The transfer policy a completed trace produces under `cfg`'s variant.
pub fn final_policy(trace: &SearchTrace, cfg: &SearchConfig) -> Result<PolicySpec> {
    if trace.variant != cfg.variant {
        return Err(Error::invalid(format!(
            "trace was produced by {}, config asks for {}",
            trace.variant, cfg.variant
        )));
    }
    if trace.data.is_empty() {
        return Err(Error::invalid("trace has no observations"));
    }
    let spec = match cfg.variant {
        Variant::StandardBo => PolicySpec::Plain(trace.best_theta().clone()),
        Variant::UncapsMinusEp => PolicySpec::Unscented {
            theta: trace.best_theta().clone(),
            variance: cfg.noise_variance,
            k: cfg.k,
        },
        Variant::Uncaps | Variant::UncapsPlusGa => {
            let set = trace
                .optimal_set
                .clone()
                .ok_or_else(|| Error::invalid("trace carries no optimal-parameter set"))?;
            if cfg.variant == Variant::Uncaps {
                PolicySpec::Averaged(set)
            } else {
                PolicySpec::GaussianFit { set, k: cfg.k }
            }
        }
    };
    spec.validate()?;
    Ok(spec)
}
