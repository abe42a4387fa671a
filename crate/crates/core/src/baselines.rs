//! Domain-randomisation baseline: one linear feedback rule whose gain is the
//! mean of the matched LQR gains over parameters drawn uniformly from a box.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{LinearFeedback, LqrPolicyProvider, PolicyProvider};
use crate::rng::derive_rng;
use crate::ParamVector;

pub const DEFAULT_DR_SAMPLES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrConfig {
    pub samples: usize,
    /// Per-component sampling box inside the unit cube; `[0, 1]` is the full cube.
    pub lower: f64,
    pub upper: f64,
    /// Set per trial by the experiment runner.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for DrConfig {
    fn default() -> Self {
        DrConfig {
            samples: DEFAULT_DR_SAMPLES,
            lower: 0.0,
            upper: 1.0,
            seed: 0,
        }
    }
}

impl DrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::invalid("DR needs at least one sample"));
        }
        if !(0.0 <= self.lower && self.lower <= self.upper && self.upper <= 1.0) {
            return Err(Error::invalid(format!(
                "DR range [{}, {}] must satisfy 0 <= lower <= upper <= 1",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// The sampled parameter set, in draw order.
    pub fn sample_thetas(&self, dim: usize) -> Result<Vec<ParamVector>> {
        self.validate()?;
        let mut rng = derive_rng(self.seed, "domain-randomisation", 0);
        let width = self.upper - self.lower;
        Ok((0..self.samples)
            .map(|_| DVector::from_fn(dim, |_, _| self.lower + width * rng.random::<f64>()))
            .collect())
    }
}

/// Mean-gain feedback over the given parameters. The feedforward term is averaged
/// the same way, so a single parameter reproduces its matched policy exactly.
pub fn mean_gain_policy(provider: &LqrPolicyProvider, thetas: &[ParamVector]) -> Result<LinearFeedback> {
    if thetas.is_empty() {
        return Err(Error::invalid("need at least one parameter"));
    }
    let solutions = thetas
        .par_iter()
        .enumerate()
        .map(|(i, t)| provider.solve(t).map_err(|e| e.at("DR gain", i)))
        .collect::<Result<Vec<_>>>()?;
    let n = solutions.len() as f64;
    let first = &solutions[0];
    let mut gain = DMatrix::zeros(first.gain.nrows(), first.gain.ncols());
    let mut feedforward = DVector::zeros(first.feedforward.len());
    for s in &solutions {
        gain += &s.gain;
        feedforward += &s.feedforward;
    }
    Ok(LinearFeedback {
        gain: gain / n,
        feedforward: feedforward / n,
        target: provider.plant().target().clone(),
    })
}

pub fn dr_policy(cfg: &DrConfig, provider: &LqrPolicyProvider) -> Result<LinearFeedback> {
    let thetas = cfg.sample_thetas(provider.dim())?;
    mean_gain_policy(provider, &thetas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{rollout, EpisodeConfig, InitialState, LatentParam, PhysicalParam, PlantSpec, RealWorldSpec};
    use approx::assert_relative_eq;

    fn provider(latent: &[PhysicalParam]) -> LqrPolicyProvider {
        let plant = PlantSpec::mass_spring_damper(latent.iter().map(|&p| LatentParam::with_default_range(p)).collect())
            .unwrap();
        LqrPolicyProvider::new(plant).unwrap()
    }

    #[test]
    fn degenerate_range_is_matched_policy() {
        let p = provider(&[PhysicalParam::Mass, PhysicalParam::ForceBias]);
        let cfg = DrConfig {
            samples: 7,
            lower: 0.3,
            upper: 0.3,
            seed: 1,
        };
        let dr = dr_policy(&cfg, &p).unwrap();
        let matched = p.feedback(&DVector::from_element(2, 0.3)).unwrap();
        assert_relative_eq!(dr.gain, matched.gain, epsilon = 1e-12);
        assert_relative_eq!(dr.feedforward, matched.feedforward, epsilon = 1e-12);
    }

    #[test]
    fn two_sample_mean_is_hand_average() {
        let p = provider(&[PhysicalParam::Mass]);
        let a = DVector::from_element(1, 0.1);
        let b = DVector::from_element(1, 0.9);
        let dr = mean_gain_policy(&p, &[a.clone(), b.clone()]).unwrap();
        let (ka, kb) = (p.solve(&a).unwrap().gain, p.solve(&b).unwrap().gain);
        for j in 0..2 {
            assert_relative_eq!(dr.gain[(0, j)], 0.5 * (ka[(0, j)] + kb[(0, j)]), epsilon = 1e-12);
        }
    }

    #[test]
    fn sampling_is_seeded_and_in_range() {
        let cfg = DrConfig {
            samples: 50,
            lower: 0.2,
            upper: 0.6,
            seed: 4,
        };
        let a = cfg.sample_thetas(3).unwrap();
        assert_eq!(a, cfg.sample_thetas(3).unwrap());
        assert!(a.iter().flatten().all(|v| (0.2..=0.6).contains(v)));
        let other = DrConfig { seed: 5, ..cfg.clone() };
        assert_ne!(a, other.sample_thetas(3).unwrap());
    }

    #[test]
    fn invalid_configs() {
        assert!(DrConfig {
            samples: 0,
            ..DrConfig::default()
        }
        .validate()
        .is_err());
        assert!(DrConfig {
            lower: 0.7,
            upper: 0.2,
            ..DrConfig::default()
        }
        .validate()
        .is_err());
        assert!(DrConfig {
            upper: 1.5,
            ..DrConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn matched_beats_full_cube_dr_on_heterogeneous_gain_plant() {
        let p = provider(&[PhysicalParam::Mass, PhysicalParam::ActuatorGain]);
        let theta_r = DVector::from_column_slice(&[0.9, 0.1]);
        let world = RealWorldSpec::new(p.plant().clone(), theta_r.clone(), 0.0).unwrap();
        let episode = EpisodeConfig {
            horizon: 100,
            initial: InitialState::Fixed(p.plant().initial_state().clone()),
            seed: 0,
        };
        let dr = dr_policy(&DrConfig::default(), &p).unwrap();
        let matched = p.feedback(&theta_r).unwrap();
        let r_dr = rollout(&world, &dr, &episode).unwrap();
        let r_matched = rollout(&world, &matched, &episode).unwrap();
        assert!(r_matched >= r_dr, "matched {r_matched} dr {r_dr}");
    }
}
