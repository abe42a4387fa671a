//! Parameter-conditioned policies and the transfer-time action rules.
//!
//! A [`PolicyProvider`] plays the role of a universal policy: it returns the
//! action of the policy conditioned on θ. [`LqrPolicyProvider`] realizes it
//! exactly with per-θ infinite-horizon LQR on the plant's linear dynamics.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};

use crate::env::{Action, PlantSpec, State};
use crate::error::{Error, Result};
use crate::rff::OptimalParamSet;
use crate::unscented::{sigma_points_isotropic, unscented_mean_vector};
use crate::ParamVector;

/// Maps the current state to an action.
pub trait ActionRule: Sync {
    fn action(&self, state: &State) -> Result<Action>;
}

impl<F> ActionRule for F
where
    F: Fn(&State) -> Result<Action> + Sync,
{
    fn action(&self, state: &State) -> Result<Action> {
        self(state)
    }
}

/// Action of the policy conditioned on θ. Must be deterministic in `(θ, state)`.
pub trait PolicyProvider: Sync {
    fn dim(&self) -> usize;
    fn action(&self, theta: &ParamVector, state: &State) -> Result<Action>;
}

// ---------------------------------------------------------------------------
// Riccati

/// `‖P − (Q + AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA)‖_max`.
pub fn riccati_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let pa = p * a;
    let pb = p * b;
    let s = r + b.transpose() * &pb;
    match s.try_inverse() {
        Some(s_inv) => {
            let rhs = q + a.transpose() * &pa - a.transpose() * &pb * s_inv * pb.transpose() * a;
            (p - rhs).amax()
        }
        None => f64::INFINITY,
    }
}

const RICCATI_MAX_ITERS: usize = 10_000;
const RICCATI_TOL: f64 = 1e-9;

/// Stabilizing solution of the discrete algebraic Riccati equation.
///
/// Structure-preserving doubling, then fixed-point polishing; fails if the
/// residual cannot be brought under `1e-9` within `10⁴` iterations.
pub fn solve_dare(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::invalid("Riccati matrices have inconsistent shapes"));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::invalid("action weight must be invertible"))?;
    let eye = DMatrix::<f64>::identity(n, n);
    let mut ak = a.clone();
    let mut gk = b * r_inv * b.transpose();
    let mut hk = q.clone();
    let mut iters = 0;
    while iters < RICCATI_MAX_ITERS {
        iters += 1;
        let w_inv = (&eye + &gk * &hk)
            .try_inverse()
            .ok_or_else(|| Error::numerical("singular matrix in Riccati doubling"))?;
        let aw = &ak * &w_inv;
        let h_next = &hk + ak.transpose() * &hk * &w_inv * &ak;
        let g_next = &gk + &aw * &gk * ak.transpose();
        let a_next = &aw * &ak;
        let delta = (&h_next - &hk).amax();
        let scale = h_next.amax().max(1.0);
        hk = h_next;
        gk = g_next;
        ak = a_next;
        if !hk.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical("Riccati doubling diverged"));
        }
        if delta <= 1e-15 * scale {
            break;
        }
    }
    let mut p = (&hk + hk.transpose()) * 0.5;
    // fixed-point polish
    while riccati_residual(a, b, q, r, &p) > RICCATI_TOL * 1e-3 && iters < RICCATI_MAX_ITERS {
        iters += 1;
        let pb = &p * b;
        let s_inv = (r + b.transpose() * &pb)
            .try_inverse()
            .ok_or_else(|| Error::numerical("singular matrix in Riccati iteration"))?;
        let next = q + a.transpose() * &p * a - a.transpose() * &pb * s_inv * pb.transpose() * a;
        p = (&next + next.transpose()) * 0.5;
    }
    let res = riccati_residual(a, b, q, r, &p);
    if !(res < RICCATI_TOL) {
        return Err(Error::numerical(format!(
            "Riccati equation did not converge (residual {res:e})"
        )));
    }
    Ok(p)
}

/// `K = (R + BᵀPB)⁻¹BᵀPA`.
pub fn lqr_gain_from_riccati(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let pb = p * b;
    let s_inv = (r + b.transpose() * &pb)
        .try_inverse()
        .ok_or_else(|| Error::numerical("singular matrix computing LQR gain"))?;
    Ok(s_inv * pb.transpose() * a)
}

// ---------------------------------------------------------------------------
// LQR provider

/// Optimal affine feedback `u = u_ff − K(s − s*)` for one θ.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    pub theta: ParamVector,
    pub gain: DMatrix<f64>,
    pub feedforward: DVector<f64>,
    pub riccati: DMatrix<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFeedback {
    pub gain: DMatrix<f64>,
    pub feedforward: DVector<f64>,
    pub target: State,
}

impl ActionRule for LinearFeedback {
    fn action(&self, state: &State) -> Result<Action> {
        if state.len() != self.target.len() {
            return Err(Error::invalid("state has the wrong dimension"));
        }
        let mut u = self.feedforward.clone();
        u.gemv(-1.0, &self.gain, &(state - &self.target), 1.0);
        Ok(u)
    }
}

const QUANTUM: f64 = 1e6;

type GainCache = RwLock<HashMap<Vec<i64>, Arc<LqrSolution>>>;

/// Per-θ LQR on the plant's dynamics, memoized on θ rounded to 1e-6.
///
/// Gains are always solved at the rounded θ, so a cache hit and a fresh solve
/// give bit-identical results.
#[derive(Debug)]
pub struct LqrPolicyProvider {
    plant: PlantSpec,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    discount: f64,
    cache: GainCache,
}

impl LqrPolicyProvider {
    /// Provider whose cost weights are the plant's reward weights, undiscounted.
    pub fn new(plant: PlantSpec) -> Result<Self> {
        let q = plant.q_reward().clone();
        let r = plant.r_reward().clone();
        Self::with_weights(plant, q, r, 1.0)
    }

    pub fn with_weights(plant: PlantSpec, q: DMatrix<f64>, r: DMatrix<f64>, discount: f64) -> Result<Self> {
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(Error::invalid("discount must lie in (0, 1]"));
        }
        if q.shape() != (PlantSpec::STATE_DIM, PlantSpec::STATE_DIM)
            || r.shape() != (PlantSpec::ACTION_DIM, PlantSpec::ACTION_DIM)
        {
            return Err(Error::invalid("LQR weights have the wrong shape"));
        }
        Ok(LqrPolicyProvider {
            plant,
            q,
            r,
            discount,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn plant(&self) -> &PlantSpec {
        &self.plant
    }

    fn key(theta: &ParamVector) -> Vec<i64> {
        theta.iter().map(|v| (v * QUANTUM).round() as i64).collect()
    }

    /// Solve without touching the cache.
    pub fn solve(&self, theta: &ParamVector) -> Result<LqrSolution> {
        let key = Self::key(theta);
        let quantized = DVector::from_iterator(key.len(), key.iter().map(|&k| k as f64 / QUANTUM));
        self.solve_at(quantized)
    }

    fn solve_at(&self, theta: ParamVector) -> Result<LqrSolution> {
        let dynamics = self.plant.dynamics(&theta)?;
        let scale = self.discount.sqrt();
        let a = &dynamics.a * scale;
        let b = &dynamics.b * scale;
        let p = solve_dare(&a, &b, &self.q, &self.r)?;
        let residual = riccati_residual(&a, &b, &self.q, &self.r, &p);
        let gain = lqr_gain_from_riccati(&a, &b, &self.r, &p)?;
        // steady-state force holding the target: B·u = (I − A)s* − c
        let target = self.plant.target();
        let need = target - &dynamics.a * target - &dynamics.drift;
        let feedforward = dynamics
            .b
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::numerical(e.to_string()))?
            * need;
        Ok(LqrSolution {
            theta,
            gain,
            feedforward,
            riccati: p,
            residual,
        })
    }

    pub fn lqr_gain(&self, theta: &ParamVector) -> Result<Arc<LqrSolution>> {
        if theta.len() != self.plant.dim() {
            return Err(Error::invalid(format!(
                "parameter vector has dimension {}, provider expects {}",
                theta.len(),
                self.plant.dim()
            )));
        }
        let key = Self::key(theta);
        if let Some(hit) = self.cache.read().expect("gain cache poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let sol = Arc::new(self.solve(theta)?);
        let mut cache = self.cache.write().expect("gain cache poisoned");
        Ok(Arc::clone(cache.entry(key).or_insert(sol)))
    }

    /// The matched feedback rule at θ as a standalone action rule.
    pub fn feedback(&self, theta: &ParamVector) -> Result<LinearFeedback> {
        let sol = self.lqr_gain(theta)?;
        Ok(LinearFeedback {
            gain: sol.gain.clone(),
            feedforward: sol.feedforward.clone(),
            target: self.plant.target().clone(),
        })
    }

    pub fn cache_len(&self) -> usize {
        self.cache.read().expect("gain cache poisoned").len()
    }
}

impl PolicyProvider for LqrPolicyProvider {
    fn dim(&self) -> usize {
        self.plant.dim()
    }

    fn action(&self, theta: &ParamVector, state: &State) -> Result<Action> {
        let sol = self.lqr_gain(theta)?;
        let mut u = sol.feedforward.clone();
        u.gemv(-1.0, &sol.gain, &(state - self.plant.target()), 1.0);
        Ok(u)
    }
}

// ---------------------------------------------------------------------------
// Action rules

/// Unscented Action Selection: UT-weighted mean of the actions at the clamped
/// sigma points of `N(θ̂, I·σ²)`.
pub fn uas_action<P: PolicyProvider + ?Sized>(
    provider: &P,
    theta_hat: &ParamVector,
    variance: f64,
    k: f64,
    state: &State,
) -> Result<Action> {
    if variance == 0.0 {
        return provider.action(theta_hat, state);
    }
    let sp = sigma_points_isotropic(theta_hat, variance, k)?.clamp_to_cube();
    unscented_mean_vector(|theta| provider.action(theta, state), &sp)
}

/// Unweighted mean of the actions at every sample in `set`.
pub fn averaged_policy_action<P: PolicyProvider + ?Sized>(
    provider: &P,
    set: &OptimalParamSet,
    state: &State,
) -> Result<Action> {
    if set.is_empty() {
        return Err(Error::invalid("optimal parameter set is empty"));
    }
    let mut acc: Option<Action> = None;
    for theta in set.samples() {
        let u = provider.action(theta, state)?;
        match acc.as_mut() {
            None => acc = Some(u),
            Some(a) => *a += u,
        }
    }
    Ok(acc.expect("non-empty set") / set.len() as f64)
}

/// Mean and isotropic variance fitted to `set`.
pub fn gaussian_fit(set: &OptimalParamSet) -> Result<(ParamVector, f64)> {
    let variance = set.isotropic_variance()?;
    let mean = set.mean().map(|v| v.clamp(0.0, 1.0));
    Ok((mean, variance))
}

/// UAS around a Gaussian fitted to the optimal-parameter samples.
pub fn ga_action<P: PolicyProvider + ?Sized>(
    provider: &P,
    set: &OptimalParamSet,
    k: f64,
    state: &State,
) -> Result<Action> {
    let (mean, variance) = gaussian_fit(set)?;
    uas_action(provider, &mean, variance, k, state)
}

/// How a transferred policy turns parameter estimates into actions.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Plain(ParamVector),
    Unscented { theta: ParamVector, variance: f64, k: f64 },
    Averaged(OptimalParamSet),
    GaussianFit { set: OptimalParamSet, k: f64 },
}

impl PolicySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PolicySpec::Unscented { variance, .. } if !(*variance >= 0.0) => {
                Err(Error::invalid("UAS variance must be >= 0"))
            }
            PolicySpec::GaussianFit { set, .. } if set.len() < 2 => {
                Err(Error::invalid("Gaussian fit needs at least two samples"))
            }
            _ => Ok(()),
        }
    }

    pub fn bind<'a, P: PolicyProvider + ?Sized>(&'a self, provider: &'a P) -> BoundPolicy<'a, P> {
        BoundPolicy { provider, spec: self }
    }

    pub fn action<P: PolicyProvider + ?Sized>(&self, provider: &P, state: &State) -> Result<Action> {
        match self {
            PolicySpec::Plain(theta) => provider.action(theta, state),
            PolicySpec::Unscented { theta, variance, k } => uas_action(provider, theta, *variance, *k, state),
            PolicySpec::Averaged(set) => averaged_policy_action(provider, set, state),
            PolicySpec::GaussianFit { set, k } => ga_action(provider, set, *k, state),
        }
    }
}

/// A [`PolicySpec`] paired with the provider it fetches actions from.
pub struct BoundPolicy<'a, P: PolicyProvider + ?Sized> {
    provider: &'a P,
    spec: &'a PolicySpec,
}

impl<P: PolicyProvider + ?Sized> ActionRule for BoundPolicy<'_, P> {
    fn action(&self, state: &State) -> Result<Action> {
        self.spec.action(self.provider, state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{LatentParam, PhysicalParam};
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn m1(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn zero_dynamics_gives_zero_gain() {
        let (q, r) = (2.5, 0.7);
        let p = solve_dare(&m1(0.0), &m1(1.3), &m1(q), &m1(r)).unwrap();
        assert_relative_eq!(p[(0, 0)], q, epsilon = 1e-12);
        let k = lqr_gain_from_riccati(&m1(0.0), &m1(1.3), &m1(r), &p).unwrap();
        assert_eq!(k[(0, 0)], 0.0);
    }

    #[test]
    fn scalar_gain_matches_fixed_point_iteration() {
        // oracle: iterate the Riccati recursion from P = Q to convergence
        let (a, b, q, r) = (1.0f64, 1.0f64, 1.0f64, 1.0f64);
        let mut p = q;
        loop {
            let next = q + a * p * a - (a * p * b).powi(2) / (r + b * p * b);
            if (next - p).abs() < 1e-12 {
                p = next;
                break;
            }
            p = next;
        }
        let k_oracle = a * b * p / (r + b * b * p);
        let pm = solve_dare(&m1(a), &m1(b), &m1(q), &m1(r)).unwrap();
        let k = lqr_gain_from_riccati(&m1(a), &m1(b), &m1(r), &pm).unwrap();
        assert_relative_eq!(k[(0, 0)], k_oracle, epsilon = 1e-8);
        // golden-ratio closed form for this case
        assert_relative_eq!(pm[(0, 0)], (1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-10);
    }

    fn provider(latent: &[PhysicalParam]) -> LqrPolicyProvider {
        let plant = PlantSpec::mass_spring_damper(latent.iter().map(|&p| LatentParam::with_default_range(p)).collect())
            .unwrap();
        LqrPolicyProvider::new(plant).unwrap()
    }

    #[test]
    fn gains_depend_on_mass() {
        let p = provider(&[PhysicalParam::Mass]);
        let k1 = p.lqr_gain(&v(&[0.1])).unwrap().gain.clone();
        let k2 = p.lqr_gain(&v(&[0.9])).unwrap().gain.clone();
        assert!((k1 - k2).norm() > 0.0);
    }

    #[test]
    fn riccati_residual_and_stability() {
        let p = provider(&[PhysicalParam::Mass, PhysicalParam::Spring, PhysicalParam::ActuatorGain]);
        let sol = p.lqr_gain(&v(&[0.2, 0.7, 0.4])).unwrap();
        assert!(sol.residual < 1e-9);
        let dynamics = p.plant().dynamics(&sol.theta).unwrap();
        let closed = &dynamics.a - &dynamics.b * &sol.gain;
        let radius = closed
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(radius < 1.0);
    }

    #[test]
    fn cache_hits_are_bit_identical() {
        let p = provider(&[PhysicalParam::Mass, PhysicalParam::Damping]);
        let theta = v(&[0.123_456_7, 0.765_432_1]);
        let first = p.lqr_gain(&theta).unwrap();
        let second = p.lqr_gain(&theta).unwrap();
        let fresh = p.solve(&theta).unwrap();
        assert_eq!(*first, *second);
        assert_eq!(*first, fresh);
        assert_eq!(p.cache_len(), 1);
    }

    #[test]
    fn force_bias_feedforward_holds_target() {
        let plant =
            PlantSpec::mass_spring_damper(vec![LatentParam::with_default_range(PhysicalParam::ForceBias)]).unwrap();
        let p = LqrPolicyProvider::new(plant.clone()).unwrap();
        let theta = v(&[0.9]);
        let u = p.action(&theta, plant.target()).unwrap();
        let (next, _) = crate::env::sim_step(&plant, &theta, plant.target(), &u).unwrap();
        assert!((next - plant.target()).amax() < 1e-12);
    }

    /// Provider whose action is affine in θ: u = Wθ + Vs.
    struct Affine;
    impl PolicyProvider for Affine {
        fn dim(&self) -> usize {
            2
        }
        fn action(&self, theta: &ParamVector, state: &State) -> Result<Action> {
            Ok(v(&[
                1.5 * theta[0] - 0.5 * theta[1] + state[0],
                0.2 * theta[1] + 3.0 - state[1],
            ]))
        }
    }

    #[test]
    fn uas_zero_variance_is_plain() {
        let p = provider(&[PhysicalParam::Mass, PhysicalParam::Spring]);
        let s = v(&[0.4, -0.3]);
        let theta = v(&[0.3, 0.6]);
        assert_eq!(
            uas_action(&p, &theta, 0.0, 2.0, &s).unwrap(),
            p.action(&theta, &s).unwrap()
        );
    }

    #[test]
    fn uas_affine_exactness() {
        let s = v(&[0.4, -0.3]);
        let theta = v(&[0.5, 0.4]);
        let got = uas_action(&Affine, &theta, 0.01, 2.0, &s).unwrap();
        assert!((got - Affine.action(&theta, &s).unwrap()).amax() < 1e-10);
    }

    #[test]
    fn uas_matches_five_term_sum() {
        let p = provider(&[PhysicalParam::Mass, PhysicalParam::Spring]);
        let s = v(&[0.8, 0.1]);
        let theta = v(&[0.4, 0.55]);
        let (var, k) = (0.01f64, 2.0f64);
        let r = ((2.0 + k) * var).sqrt();
        let a = |t: [f64; 2]| p.action(&v(&t), &s).unwrap();
        let want = a([0.4, 0.55]) * 0.5
            + (a([0.4 + r, 0.55]) + a([0.4, 0.55 + r]) + a([0.4 - r, 0.55]) + a([0.4, 0.55 - r])) * 0.125;
        let got = uas_action(&p, &theta, var, k, &s).unwrap();
        assert!((got - want).amax() < 1e-10);
    }

    #[test]
    fn averaged_action_cases() {
        let s = v(&[0.1, 0.2]);
        let same = OptimalParamSet::new(vec![v(&[0.3, 0.3]); 4]).unwrap();
        assert_eq!(
            averaged_policy_action(&Affine, &same, &s).unwrap(),
            Affine.action(&v(&[0.3, 0.3]), &s).unwrap()
        );
        let pair = OptimalParamSet::new(vec![v(&[0.2, 0.8]), v(&[0.6, 0.4])]).unwrap();
        let mid = Affine.action(&v(&[0.4, 0.6]), &s).unwrap();
        assert!((averaged_policy_action(&Affine, &pair, &s).unwrap() - mid).amax() < 1e-12);

        let p = provider(&[PhysicalParam::Mass]);
        let thetas: Vec<_> = [0.1, 0.25, 0.5, 0.8, 0.95].iter().map(|&t| v(&[t])).collect();
        let set = OptimalParamSet::new(thetas.clone()).unwrap();
        let mut sum = 0.0;
        for t in &thetas {
            sum += p.action(t, &s).unwrap()[0];
        }
        assert_relative_eq!(
            averaged_policy_action(&p, &set, &s).unwrap()[0],
            sum / 5.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn ga_action_cases() {
        let p = provider(&[PhysicalParam::Mass]);
        let s = v(&[0.7, -0.1]);
        let same = OptimalParamSet::new(vec![v(&[0.35]); 3]).unwrap();
        assert_eq!(
            ga_action(&p, &same, 2.0, &s).unwrap(),
            p.action(&v(&[0.35]), &s).unwrap()
        );

        let set = OptimalParamSet::new(vec![v(&[0.2]), v(&[0.4]), v(&[0.6])]).unwrap();
        let (mean, var) = gaussian_fit(&set).unwrap();
        assert_relative_eq!(mean[0], 0.4, epsilon = 1e-15);
        assert_relative_eq!(var, 0.04, epsilon = 1e-15);
        let r = (3.0f64 * 0.04).sqrt();
        let a = |t: f64| p.action(&v(&[t]), &s).unwrap()[0];
        let want = (2.0 / 3.0) * a(0.4) + (1.0 / 6.0) * (a(0.4 + r) + a(0.4 - r));
        assert_relative_eq!(ga_action(&p, &set, 2.0, &s).unwrap()[0], want, epsilon = 1e-10);

        let pair = OptimalParamSet::new(vec![v(&[0.38, 0.36]), v(&[0.42, 0.44])]).unwrap();
        let got = ga_action(&Affine, &pair, 2.0, &s).unwrap();
        assert!((got - Affine.action(&v(&[0.4, 0.4]), &s).unwrap()).amax() < 1e-10);

        let single = OptimalParamSet::new(vec![v(&[0.3])]).unwrap();
        assert!(matches!(
            ga_action(&p, &single, 2.0, &s),
            Err(Error::InvalidArgument(_))
        ));
    }
}
