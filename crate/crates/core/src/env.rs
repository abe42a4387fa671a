//! Toy sim2real testbed: a θ-parameterized mass-spring-damper simulator and
//! its noisy "real world" twin, with rollout and jumpstart evaluation.
//!
//! The plant is a 1-DOF mass-spring-damper discretized with forward Euler,
//! state `(position, velocity)`, action = commanded force. Five physical
//! quantities can be latent: mass, spring stiffness, damping, actuator gain and
//! a constant force bias. Latent components are mapped affinely from `[0,1]`
//! onto their physical ranges; the rest stay at nominal values.
//!
//! Both twins report the reward of the successor state,
//! `r = −(s'−s*)ᵀQ(s'−s*) − uᵀRu`.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::ActionRule;
use crate::rng::{derive_rng, Rng};
use crate::ParamVector;

pub type State = DVector<f64>;
pub type Action = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysicalParam {
    Mass,
    Spring,
    Damping,
    ActuatorGain,
    ForceBias,
}

impl PhysicalParam {
    pub const ALL: [PhysicalParam; 5] = [
        PhysicalParam::Mass,
        PhysicalParam::Spring,
        PhysicalParam::Damping,
        PhysicalParam::ActuatorGain,
        PhysicalParam::ForceBias,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn default_range(self) -> (f64, f64) {
        match self {
            PhysicalParam::Mass => (0.5, 2.0),
            PhysicalParam::Spring => (0.5, 5.0),
            PhysicalParam::Damping => (0.05, 1.0),
            PhysicalParam::ActuatorGain => (0.5, 1.5),
            PhysicalParam::ForceBias => (-0.2, 0.2),
        }
    }

    pub fn default_nominal(self) -> f64 {
        match self {
            PhysicalParam::Mass => 1.0,
            PhysicalParam::Spring => 2.0,
            PhysicalParam::Damping => 0.3,
            PhysicalParam::ActuatorGain => 1.0,
            PhysicalParam::ForceBias => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentParam {
    pub param: PhysicalParam,
    pub lower: f64,
    pub upper: f64,
}

impl LatentParam {
    pub fn with_default_range(param: PhysicalParam) -> Self {
        let (lower, upper) = param.default_range();
        LatentParam { param, lower, upper }
    }

    pub fn to_physical(&self, unit: f64) -> f64 {
        self.lower + unit * (self.upper - self.lower)
    }
}

/// Discrete-time affine dynamics `s' = A s + B u + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub drift: DVector<f64>,
}

impl LinearDynamics {
    pub fn step(&self, s: &State, u: &Action) -> State {
        let mut next = &self.a * s + &self.drift;
        next.gemv(1.0, &self.b, u, 1.0);
        next
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    latent: Vec<LatentParam>,
    nominal: [f64; 5],
    dt: f64,
    target: State,
    q_reward: DMatrix<f64>,
    r_reward: DMatrix<f64>,
    initial_state: State,
    init_half_width: State,
}

impl PlantSpec {
    pub const STATE_DIM: usize = 2;
    pub const ACTION_DIM: usize = 1;

    /// Mass-spring-damper with the given latent components and default settings.
    pub fn mass_spring_damper(latent: Vec<LatentParam>) -> Result<Self> {
        let nominal = PhysicalParam::ALL.map(PhysicalParam::default_nominal);
        PlantBuilder {
            latent,
            nominal,
            ..PlantBuilder::default()
        }
        .build()
    }

    pub fn builder() -> PlantBuilder {
        PlantBuilder::default()
    }

    pub fn dim(&self) -> usize {
        self.latent.len()
    }

    pub fn latent(&self) -> &[LatentParam] {
        &self.latent
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn target(&self) -> &State {
        &self.target
    }

    pub fn q_reward(&self) -> &DMatrix<f64> {
        &self.q_reward
    }

    pub fn r_reward(&self) -> &DMatrix<f64> {
        &self.r_reward
    }

    pub fn initial_state(&self) -> &State {
        &self.initial_state
    }

    pub fn init_half_width(&self) -> &State {
        &self.init_half_width
    }

    fn check_theta(&self, theta: &ParamVector) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::invalid(format!(
                "parameter vector has dimension {}, plant expects {}",
                theta.len(),
                self.dim()
            )));
        }
        if theta.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("parameter vector lies outside the unit cube"));
        }
        Ok(())
    }

    /// Full physical parameter vector `[mass, spring, damping, gain, bias]`.
    pub fn physical(&self, theta: &ParamVector) -> Result<[f64; 5]> {
        self.check_theta(theta)?;
        let mut phys = self.nominal;
        for (lp, &u) in self.latent.iter().zip(theta.iter()) {
            phys[lp.param.index()] = lp.to_physical(u);
        }
        Ok(phys)
    }

    pub fn dynamics(&self, theta: &ParamVector) -> Result<LinearDynamics> {
        let [mass, spring, damping, gain, bias] = self.physical(theta)?;
        let dt = self.dt;
        let a = DMatrix::from_row_slice(2, 2, &[1.0, dt, -dt * spring / mass, 1.0 - dt * damping / mass]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, dt * gain / mass]);
        let drift = DVector::from_column_slice(&[0.0, dt * bias / mass]);
        let dyn_ = LinearDynamics { a, b, drift };
        if dyn_
            .a
            .iter()
            .chain(dyn_.b.iter())
            .chain(dyn_.drift.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::numerical("plant matrices are not finite"));
        }
        Ok(dyn_)
    }

    /// `−(s−s*)ᵀQ(s−s*) − uᵀRu`.
    pub fn reward(&self, s: &State, u: &Action) -> f64 {
        let e = s - &self.target;
        -(e.dot(&(&self.q_reward * &e)) + u.dot(&(&self.r_reward * u)))
    }

    fn transition(&self, dynamics: &LinearDynamics, s: &State, u: &Action) -> Result<(State, f64)> {
        if s.len() != Self::STATE_DIM || u.len() != Self::ACTION_DIM {
            return Err(Error::invalid("state or action has the wrong dimension"));
        }
        let next = dynamics.step(s, u);
        let r = self.reward(&next, u);
        if !r.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("transition produced non-finite values"));
        }
        Ok((next, r))
    }
}

#[derive(Debug, Clone)]
pub struct PlantBuilder {
    pub latent: Vec<LatentParam>,
    pub nominal: [f64; 5],
    pub dt: f64,
    pub target: State,
    pub q_reward: DMatrix<f64>,
    pub r_reward: DMatrix<f64>,
    pub initial_state: State,
    pub init_half_width: State,
}

impl Default for PlantBuilder {
    fn default() -> Self {
        PlantBuilder {
            latent: vec![LatentParam::with_default_range(PhysicalParam::Mass)],
            nominal: PhysicalParam::ALL.map(PhysicalParam::default_nominal),
            dt: 0.05,
            target: DVector::zeros(2),
            q_reward: DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 0.1])),
            r_reward: DMatrix::from_element(1, 1, 0.01),
            initial_state: DVector::from_column_slice(&[1.0, 0.0]),
            init_half_width: DVector::from_column_slice(&[1.0, 0.5]),
        }
    }
}

impl PlantBuilder {
    pub fn build(self) -> Result<PlantSpec> {
        if self.latent.is_empty() {
            return Err(Error::invalid("a plant needs at least one latent parameter"));
        }
        for (i, lp) in self.latent.iter().enumerate() {
            if !(lp.lower < lp.upper) {
                return Err(Error::invalid(format!("latent range {i} must have lower < upper")));
            }
            if self.latent[..i].iter().any(|o| o.param == lp.param) {
                return Err(Error::invalid(format!("latent parameter {:?} listed twice", lp.param)));
            }
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("timestep must be positive"));
        }
        let n = PlantSpec::STATE_DIM;
        if self.target.len() != n || self.initial_state.len() != n || self.init_half_width.len() != n {
            return Err(Error::invalid("state vectors must have dimension 2"));
        }
        if self.q_reward.shape() != (n, n) || self.r_reward.shape() != (1, 1) {
            return Err(Error::invalid("reward weights have the wrong shape"));
        }
        if self.q_reward.symmetric_eigenvalues().min() < -1e-12 {
            return Err(Error::invalid("state reward weight must be positive semi-definite"));
        }
        if !(self.r_reward[(0, 0)] > 0.0) {
            return Err(Error::invalid("action reward weight must be positive definite"));
        }
        let check_positive = |p: PhysicalParam, v: f64| {
            if p != PhysicalParam::ForceBias && p != PhysicalParam::Damping && !(v > 0.0) {
                Err(Error::invalid(format!("{p:?} must be positive")))
            } else if p == PhysicalParam::Damping && v < 0.0 {
                Err(Error::invalid("damping must be non-negative"))
            } else {
                Ok(())
            }
        };
        for p in PhysicalParam::ALL {
            check_positive(p, self.nominal[p.index()])?;
        }
        for lp in &self.latent {
            check_positive(lp.param, lp.lower)?;
        }
        Ok(PlantSpec {
            latent: self.latent,
            nominal: self.nominal,
            dt: self.dt,
            target: self.target,
            q_reward: self.q_reward,
            r_reward: self.r_reward,
            initial_state: self.initial_state,
            init_half_width: self.init_half_width,
        })
    }
}

/// Something episodes can be rolled out in.
pub trait Environment {
    fn plant(&self) -> &PlantSpec;
    fn step(&self, s: &State, u: &Action, rng: &mut Rng) -> Result<(State, f64)>;
}

/// The deterministic simulator at a fixed θ.
#[derive(Debug, Clone)]
pub struct SimEnv {
    plant: PlantSpec,
    dynamics: LinearDynamics,
}

impl SimEnv {
    pub fn new(plant: PlantSpec, theta: &ParamVector) -> Result<Self> {
        let dynamics = plant.dynamics(theta)?;
        Ok(SimEnv { plant, dynamics })
    }
}

impl Environment for SimEnv {
    fn plant(&self) -> &PlantSpec {
        &self.plant
    }

    fn step(&self, s: &State, u: &Action, _rng: &mut Rng) -> Result<(State, f64)> {
        self.plant.transition(&self.dynamics, s, u)
    }
}

pub fn sim_step(plant: &PlantSpec, theta: &ParamVector, s: &State, u: &Action) -> Result<(State, f64)> {
    plant.transition(&plant.dynamics(theta)?, s, u)
}

/// The noisy twin: dynamics at the hidden θ_r plus i.i.d. Gaussian state noise.
#[derive(Debug, Clone)]
pub struct RealWorldSpec {
    plant: PlantSpec,
    theta_r: ParamVector,
    noise_std: f64,
    dynamics: LinearDynamics,
    noise: Option<Normal<f64>>,
}

impl RealWorldSpec {
    pub fn new(plant: PlantSpec, theta_r: ParamVector, noise_std: f64) -> Result<Self> {
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::invalid(format!("noise std must be >= 0, got {noise_std}")));
        }
        let dynamics = plant.dynamics(&theta_r)?;
        let noise = if noise_std > 0.0 {
            Some(Normal::new(0.0, noise_std).map_err(|e| Error::invalid(e.to_string()))?)
        } else {
            None
        };
        Ok(RealWorldSpec {
            plant,
            theta_r,
            noise_std,
            dynamics,
            noise,
        })
    }

    pub fn theta_r(&self) -> &ParamVector {
        &self.theta_r
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }
}

impl Environment for RealWorldSpec {
    fn plant(&self) -> &PlantSpec {
        &self.plant
    }

    fn step(&self, s: &State, u: &Action, rng: &mut Rng) -> Result<(State, f64)> {
        real_step(self, s, u, rng)
    }
}

pub fn real_step(world: &RealWorldSpec, s: &State, u: &Action, rng: &mut Rng) -> Result<(State, f64)> {
    if s.len() != PlantSpec::STATE_DIM || u.len() != PlantSpec::ACTION_DIM {
        return Err(Error::invalid("state or action has the wrong dimension"));
    }
    let mut next = world.dynamics.step(s, u);
    if let Some(noise) = &world.noise {
        for v in next.iter_mut() {
            *v += noise.sample(rng);
        }
    }
    let r = world.plant.reward(&next, u);
    if !r.is_finite() || next.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("transition produced non-finite values"));
    }
    Ok((next, r))
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Fixed(State),
    /// Uniform in the plant's box around the target, drawn from the episode stream.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub horizon: usize,
    pub initial: InitialState,
    pub seed: u64,
}

fn initial_state(plant: &PlantSpec, init: &InitialState, rng: &mut Rng) -> State {
    match init {
        InitialState::Fixed(s) => s.clone(),
        InitialState::Random => DVector::from_fn(PlantSpec::STATE_DIM, |i, _| {
            let w = plant.init_half_width[i];
            plant.target[i] + w * (2.0 * rng.random::<f64>() - 1.0)
        }),
    }
}

/// Cumulative reward of one episode.
pub fn rollout<E, P>(env: &E, policy: &P, cfg: &EpisodeConfig) -> Result<f64>
where
    E: Environment + ?Sized,
    P: ActionRule + ?Sized,
{
    if cfg.horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut rng = derive_rng(cfg.seed, "episode", 0);
    let mut s = initial_state(env.plant(), &cfg.initial, &mut rng);
    let mut total = 0.0;
    for t in 0..cfg.horizon {
        let u = policy.action(&s)?;
        let (next, r) = env.step(&s, &u, &mut rng).map_err(|e| e.at("episode step", t))?;
        total += r;
        s = next;
    }
    Ok(total)
}

/// Seed of jumpstart episode `index` under master seed `seed`.
pub fn jumpstart_episode_seed(seed: u64, index: usize) -> u64 {
    crate::rng::derive_seed(seed, "jumpstart", index as u64)
}

/// Mean and standard error of cumulative reward over random-start episodes.
pub fn jumpstart_eval<P>(
    world: &RealWorldSpec,
    policy: &P,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<(f64, f64)>
where
    P: ActionRule + ?Sized,
{
    if episodes == 0 {
        return Err(Error::invalid("need at least one episode"));
    }
    let returns = (0..episodes)
        .map(|i| {
            let cfg = EpisodeConfig {
                horizon,
                initial: InitialState::Random,
                seed: jumpstart_episode_seed(seed, i),
            };
            rollout(world, policy, &cfg).map_err(|e| e.at("jumpstart episode", i))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_stderr(&returns))
}

pub(crate) fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
