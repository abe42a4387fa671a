//! Multi-restart local maximization on the unit cube: projected gradient
//! ascent, or projected BFGS for smooth objectives with cheap gradients.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::ParamVector;

/// A scalar function on the unit cube. Closures get finite-difference gradients.
pub trait Objective {
    fn value(&self, x: &ParamVector) -> Result<f64>;

    fn value_and_gradient(&self, x: &ParamVector) -> Result<(f64, ParamVector)> {
        let fx = self.value(x)?;
        let mut grad = DVector::zeros(x.len());
        let mut probe = x.clone();
        for i in 0..x.len() {
            let lo = (x[i] - FD_STEP).max(0.0);
            let hi = (x[i] + FD_STEP).min(1.0);
            probe[i] = hi;
            let f_hi = if hi > x[i] { self.value(&probe)? } else { fx };
            probe[i] = lo;
            let f_lo = if lo < x[i] { self.value(&probe)? } else { fx };
            probe[i] = x[i];
            grad[i] = (f_hi - f_lo) / (hi - lo);
        }
        Ok((fx, grad))
    }
}

const FD_STEP: f64 = 1e-6;

impl<F> Objective for F
where
    F: Fn(&ParamVector) -> Result<f64>,
{
    fn value(&self, x: &ParamVector) -> Result<f64> {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LocalMethod {
    /// Adaptive-step steepest ascent.
    #[default]
    GradientAscent,
    /// Quasi-Newton ascent with bound-active components frozen.
    Bfgs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaximizeOptions {
    pub restarts: usize,
    pub method: LocalMethod,
    pub max_iters: usize,
    /// First trial step length, in cube units.
    pub initial_step: f64,
    /// Ascent stops once the trial step shrinks below this length.
    pub min_step: f64,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        MaximizeOptions {
            restarts: 50,
            method: LocalMethod::GradientAscent,
            max_iters: 100,
            initial_step: 0.05,
            min_step: 1e-7,
        }
    }
}

fn project(x: &mut ParamVector) {
    for v in x.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Zero the gradient components that point out of the cube at an active bound.
fn project_gradient(x: &ParamVector, g: &mut ParamVector) {
    for i in 0..x.len() {
        if (x[i] <= 0.0 && g[i] < 0.0) || (x[i] >= 1.0 && g[i] > 0.0) {
            g[i] = 0.0;
        }
    }
}

fn ascend<O: Objective + ?Sized>(f: &O, start: ParamVector, opts: &MaximizeOptions) -> Result<(ParamVector, f64)> {
    let mut x = start;
    let (mut fx, mut g) = f.value_and_gradient(&x)?;
    if !fx.is_finite() {
        return Err(Error::Evaluation("objective is not finite at start point".into()));
    }
    let mut step = opts.initial_step;
    for _ in 0..opts.max_iters {
        project_gradient(&x, &mut g);
        let gn = g.norm();
        if !(gn > 1e-14) {
            break;
        }
        let mut cand = &x + &g * (step / gn);
        project(&mut cand);
        let accepted = match f.value(&cand) {
            Ok(fc) if fc.is_finite() && fc > fx => {
                x = cand;
                match f.value_and_gradient(&x) {
                    Ok((v, grad)) => {
                        fx = v;
                        g = grad;
                        true
                    }
                    Err(_) => break,
                }
            }
            _ => false,
        };
        if accepted {
            step = (step * 2.0).min(1.0);
        } else {
            step *= 0.5;
            if step < opts.min_step {
                break;
            }
        }
    }
    Ok((x, fx))
}

fn free_mask(x: &ParamVector, g: &ParamVector) -> Vec<bool> {
    (0..x.len())
        .map(|i| !((x[i] <= 0.0 && g[i] <= 0.0) || (x[i] >= 1.0 && g[i] >= 0.0)))
        .collect()
}

const BFGS_GRADIENT_TOL: f64 = 1e-6;

fn ascend_bfgs<O: Objective + ?Sized>(f: &O, start: ParamVector, opts: &MaximizeOptions) -> Result<(ParamVector, f64)> {
    let n = start.len();
    let mut x = start;
    let (mut fx, mut g) = f.value_and_gradient(&x)?;
    if !fx.is_finite() {
        return Err(Error::Evaluation("objective is not finite at start point".into()));
    }
    let identity = DMatrix::<f64>::identity(n, n);
    let mut h = identity.clone();
    let mut fresh = true;
    let mut prev_free = Vec::new();
    for _ in 0..opts.max_iters {
        let free = free_mask(&x, &g);
        if free != prev_free {
            // curvature collected on a different face of the cube no longer applies
            h.copy_from(&identity);
            fresh = true;
            prev_free.clone_from(&free);
        }
        let mut gf = g.clone();
        for i in 0..n {
            if !free[i] {
                gf[i] = 0.0;
            }
        }
        if !(gf.amax() > BFGS_GRADIENT_TOL) {
            break;
        }
        let mut p = &h * &gf;
        for i in 0..n {
            if !free[i] {
                p[i] = 0.0;
            }
        }
        if p.dot(&gf) <= 0.0 {
            h.copy_from(&identity);
            fresh = true;
            p = gf.clone();
        }
        if fresh {
            // unscaled first steps would jump across the cube
            let len = p.amax();
            if len > opts.initial_step {
                p *= opts.initial_step / len;
            }
        }
        let mut alpha = 1.0;
        let mut next = None;
        while alpha * p.amax() >= opts.min_step {
            let mut cand = &x + &p * alpha;
            project(&mut cand);
            let gain = g.dot(&(&cand - &x));
            if let Ok((fc, gc)) = f.value_and_gradient(&cand) {
                if fc.is_finite() && fc > fx && fc >= fx + 1e-4 * gain {
                    next = Some((cand, fc, gc));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((cand, fc, gc)) = next else {
            if fresh {
                break;
            }
            h.copy_from(&identity);
            fresh = true;
            continue;
        };
        let mut s = &cand - &x;
        // curvature pair for the minimization of -f, restricted to the free face
        let mut y = &g - &gc;
        for i in 0..n {
            if !free[i] {
                s[i] = 0.0;
                y[i] = 0.0;
            }
        }
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let left = &identity - &s * y.transpose() * rho;
            h = &left * &h * left.transpose() + &s * s.transpose() * rho;
            fresh = false;
        }
        let converged = (fc - fx).abs() <= 1e-10 * (1.0 + fx.abs()) || s.amax() < 1e-9;
        x = cand;
        fx = fc;
        g = gc;
        if converged {
            break;
        }
    }
    Ok((x, fx))
}

fn better(a: &(ParamVector, f64), b: &(ParamVector, f64)) -> bool {
    if a.1 != b.1 {
        return a.1 > b.1;
    }
    a.0.iter().partial_cmp(b.0.iter()) == Some(std::cmp::Ordering::Less)
}

/// Maximize `f` over `[0,1]^dim` from `opts.restarts` uniform starting points.
///
/// The result is the best point reached over all restarts; ties go to the
/// lexicographically smaller point. Restarts whose objective fails at the start
/// are skipped; if every restart fails the call errors.
pub fn maximize_on_cube<O: Objective + ?Sized>(
    f: &O,
    dim: usize,
    opts: &MaximizeOptions,
    rng: &mut Rng,
) -> Result<ParamVector> {
    if opts.restarts == 0 {
        return Err(Error::invalid("at least one restart is required"));
    }
    if dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let starts: Vec<ParamVector> = (0..opts.restarts)
        .map(|_| DVector::from_fn(dim, |_, _| rng.random::<f64>()))
        .collect();
    let mut best: Option<(ParamVector, f64)> = None;
    let mut last_err = None;
    for start in starts {
        let local = match opts.method {
            LocalMethod::GradientAscent => ascend(f, start, opts),
            LocalMethod::Bfgs => ascend_bfgs(f, start, opts),
        };
        match local {
            Ok(cand) => {
                if best.as_ref().is_none_or(|b| better(&cand, b)) {
                    best = Some(cand);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.map(|(x, _)| x).ok_or_else(|| {
        Error::OptimizationFailure(format!(
            "objective failed at every start point (last error: {})",
            last_err.map(|e| e.to_string()).unwrap_or_default()
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn finds_interior_quadratic_optimum() {
        let f = |x: &ParamVector| -> Result<f64> { Ok(-x.iter().map(|v| (v - 0.7).powi(2)).sum::<f64>()) };
        let mut rng = rng_from_seed(1);
        let opts = MaximizeOptions {
            restarts: 20,
            ..Default::default()
        };
        let x = maximize_on_cube(&f, 3, &opts, &mut rng).unwrap();
        for v in x.iter() {
            assert!((v - 0.7).abs() < 1e-3, "{x}");
        }
    }

    #[test]
    fn bfgs_finds_interior_and_corner_optima() {
        let opts = MaximizeOptions {
            restarts: 5,
            method: LocalMethod::Bfgs,
            ..Default::default()
        };
        let rosen = |x: &ParamVector| -> Result<f64> {
            let (a, b) = (2.0 * x[0] - 0.6, 2.0 * x[1] - 0.36);
            Ok(-((0.3 - a).powi(2) + 10.0 * (b - a * a).powi(2)))
        };
        let x = maximize_on_cube(&rosen, 2, &opts, &mut rng_from_seed(4)).unwrap();
        assert!((x[0] - 0.45).abs() < 1e-3 && (x[1] - 0.225).abs() < 1e-3, "{x}");
        let tilted = |x: &ParamVector| -> Result<f64> { Ok(x[0] - (x[1] - 0.3).powi(2)) };
        let x = maximize_on_cube(&tilted, 2, &opts, &mut rng_from_seed(5)).unwrap();
        assert_eq!(x[0], 1.0);
        assert!((x[1] - 0.3).abs() < 1e-4);
    }

    #[test]
    fn finds_corner_optimum() {
        let f = |x: &ParamVector| -> Result<f64> { Ok(x[0] + 2.0 * x[1]) };
        let mut rng = rng_from_seed(2);
        let x = maximize_on_cube(&f, 2, &MaximizeOptions::default(), &mut rng).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn all_failing_starts_error() {
        let f = |_: &ParamVector| -> Result<f64> { Err(Error::Evaluation("boom".into())) };
        let mut rng = rng_from_seed(3);
        let r = maximize_on_cube(&f, 2, &MaximizeOptions::default(), &mut rng);
        assert!(matches!(r, Err(Error::OptimizationFailure(_))));
    }

    #[test]
    fn zero_restarts_rejected() {
        let f = |_: &ParamVector| -> Result<f64> { Ok(0.0) };
        let mut rng = rng_from_seed(3);
        let opts = MaximizeOptions {
            restarts: 0,
            ..Default::default()
        };
        assert!(maximize_on_cube(&f, 1, &opts, &mut rng).is_err());
    }
}
