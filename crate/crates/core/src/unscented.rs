//! Sigma points and the unscented transform of a function's mean.
//!
//! For `x ~ N(x̂, Σ)` in `d` dimensions and scale `k`, the `2d+1` points are
//! `x̂` and `x̂ ± (√((d+k)Σ))ᵢ`, weighted `k/(d+k)` and `1/(2(d+k))` each.
//! The matrix square root is the symmetric (spectral) one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ParamVector;

pub const DEFAULT_K: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtConfig {
    pub k: f64,
    pub d: usize,
}

impl UtConfig {
    pub fn new(k: f64, d: usize) -> Result<Self> {
        let cfg = UtConfig { k, d };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("unscented dimension must be positive"));
        }
        if !(self.d as f64 + self.k > 0.0) || !self.k.is_finite() {
            return Err(Error::invalid(format!(
                "d + k must be positive (d = {}, k = {})",
                self.d, self.k
            )));
        }
        Ok(())
    }

    pub fn center_weight(&self) -> f64 {
        self.k / (self.d as f64 + self.k)
    }

    pub fn side_weight(&self) -> f64 {
        1.0 / (2.0 * (self.d as f64 + self.k))
    }
}

/// `2d+1` points ordered `x⁰, x₊⁽¹⁾..x₊⁽ᵈ⁾, x₋⁽¹⁾..x₋⁽ᵈ⁾` with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPointSet {
    points: Vec<ParamVector>,
    weights: Vec<f64>,
}

impl SigmaPointSet {
    pub fn points(&self) -> &[ParamVector] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> &ParamVector {
        &self.points[0]
    }

    /// Clamp every point componentwise into `[0,1]^d`; weights are unchanged.
    pub fn clamp_to_cube(mut self) -> Self {
        for p in &mut self.points {
            for v in p.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        }
        self
    }

    fn from_offsets(mean: &ParamVector, offsets: &DMatrix<f64>, cfg: UtConfig) -> Self {
        let d = cfg.d;
        let mut points = Vec::with_capacity(2 * d + 1);
        points.push(mean.clone());
        for i in 0..d {
            points.push(mean + offsets.row(i).transpose());
        }
        for i in 0..d {
            points.push(mean - offsets.row(i).transpose());
        }
        let mut weights = vec![cfg.side_weight(); 2 * d + 1];
        weights[0] = cfg.center_weight();
        SigmaPointSet { points, weights }
    }
}

/// Symmetric square root of a PSD matrix. Tiny negative eigenvalues from
/// round-off are treated as zero.
pub fn symmetric_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::invalid("covariance must be square"));
    }
    let scale = m.amax().max(1.0);
    let tol = 1e-12 * scale;
    if (m - m.transpose()).amax() > tol {
        return Err(Error::invalid("covariance must be symmetric"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("covariance has non-finite entries"));
    }
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
        return Err(Error::invalid("covariance must be positive semi-definite"));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

pub fn sigma_points(mean: &ParamVector, covariance: &DMatrix<f64>, k: f64) -> Result<SigmaPointSet> {
    let d = mean.len();
    let cfg = UtConfig::new(k, d)?;
    if covariance.nrows() != d || covariance.ncols() != d {
        return Err(Error::invalid(format!(
            "covariance is {}x{}, mean has dimension {d}",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    let root = symmetric_sqrt(&(covariance * (d as f64 + k)))?;
    Ok(SigmaPointSet::from_offsets(mean, &root, cfg))
}

/// Sigma points for `N(mean, I·variance)`; the square root is `√((d+k)·variance)·I`.
pub fn sigma_points_isotropic(mean: &ParamVector, variance: f64, k: f64) -> Result<SigmaPointSet> {
    let d = mean.len();
    let cfg = UtConfig::new(k, d)?;
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::invalid(format!("variance must be >= 0, got {variance}")));
    }
    let spread = ((d as f64 + k) * variance).sqrt();
    let offsets = DMatrix::from_diagonal_element(d, d, spread);
    Ok(SigmaPointSet::from_offsets(mean, &offsets, cfg))
}

/// `ω⁰f(x⁰) + Σᵢ ω₊⁽ⁱ⁾f(x₊⁽ⁱ⁾) + ω₋⁽ⁱ⁾f(x₋⁽ⁱ⁾)`.
pub fn unscented_mean<F>(mut f: F, sp: &SigmaPointSet) -> Result<f64>
where
    F: FnMut(&ParamVector) -> Result<f64>,
{
    let mut acc = 0.0;
    for (p, w) in sp.points.iter().zip(&sp.weights) {
        acc += w * f(p)?;
    }
    Ok(acc)
}

/// Componentwise unscented mean of a vector-valued function.
pub fn unscented_mean_vector<F>(mut f: F, sp: &SigmaPointSet) -> Result<DVector<f64>>
where
    F: FnMut(&ParamVector) -> Result<DVector<f64>>,
{
    let mut acc: Option<DVector<f64>> = None;
    for (p, &w) in sp.points.iter().zip(&sp.weights) {
        let v = f(p)?;
        match acc.as_mut() {
            None => acc = Some(v * w),
            Some(a) => {
                if a.len() != v.len() {
                    return Err(Error::Evaluation(
                        "function output dimension changed across sigma points".into(),
                    ));
                }
                a.axpy(w, &v, 1.0);
            }
        }
    }
    acc.ok_or_else(|| Error::invalid("empty sigma point set"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> ParamVector {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn one_dimensional_points_and_weights() {
        let sp = sigma_points(&v(&[0.5]), &DMatrix::from_element(1, 1, 0.04), 2.0).unwrap();
        let pts: Vec<f64> = sp.points().iter().map(|p| p[0]).collect();
        assert_relative_eq!(pts[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(pts[1], 0.846_410_161_513_775_5, epsilon = 1e-12);
        assert_relative_eq!(pts[2], 0.153_589_838_486_224_5, epsilon = 1e-12);
        assert_relative_eq!(sp.weights()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(sp.weights()[1], 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(sp.weights()[2], 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_covariance_collapses() {
        let mean = v(&[0.1, 0.2, 0.3]);
        let sp = sigma_points(&mean, &DMatrix::zeros(3, 3), 2.0).unwrap();
        assert_eq!(sp.len(), 7);
        assert!(sp.points().iter().all(|p| p == &mean));
        assert_relative_eq!(sp.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn five_dimensional_isotropic_geometry() {
        let mean = DVector::from_element(5, 0.5);
        let sigma = 0.1;
        let cov = DMatrix::identity(5, 5) * sigma * sigma;
        let sp = sigma_points(&mean, &cov, 2.0).unwrap();
        assert_eq!(sp.len(), 11);
        for p in &sp.points()[1..] {
            assert_relative_eq!((p - &mean).norm(), 7f64.sqrt() * sigma, epsilon = 1e-12);
        }
        assert_relative_eq!(sp.weights()[0], 2.0 / 7.0, epsilon = 1e-15);
        for w in &sp.weights()[1..] {
            assert_relative_eq!(*w, 1.0 / 14.0, epsilon = 1e-15);
        }
        let iso = sigma_points_isotropic(&mean, sigma * sigma, 2.0).unwrap();
        for (a, b) in iso.points().iter().zip(sp.points()) {
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        let mean = v(&[0.0, 0.0]);
        let not_psd = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            sigma_points(&mean, &not_psd, 2.0),
            Err(Error::InvalidArgument(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(sigma_points(&mean, &asym, 2.0).is_err());
        assert!(sigma_points(&mean, &DMatrix::identity(2, 2), -2.0).is_err());
        assert!(sigma_points_isotropic(&mean, -0.1, 2.0).is_err());
    }

    #[test]
    fn square_mean_independent_of_k() {
        for k in [-0.5, 0.5, 1.0, 2.0, 3.0] {
            let sp = sigma_points(&v(&[0.0]), &DMatrix::from_element(1, 1, 0.09), k).unwrap();
            let m = unscented_mean(|x| Ok(x[0] * x[0]), &sp).unwrap();
            assert_relative_eq!(m, 0.09, epsilon = 1e-12);
        }
    }

    #[test]
    fn sine_matches_explicit_three_term_sum() {
        let sp = sigma_points(&v(&[0.3]), &DMatrix::from_element(1, 1, 0.04), 2.0).unwrap();
        let got = unscented_mean(|x| Ok(x[0].sin()), &sp).unwrap();
        // oracle: (2/3)·sin(0.3) + (1/6)·sin(0.3 + √0.12) + (1/6)·sin(0.3 − √0.12)
        let r = 0.12f64.sqrt();
        let want = (2.0 / 3.0) * 0.3f64.sin() + (1.0 / 6.0) * (0.3 + r).sin() + (1.0 / 6.0) * (0.3 - r).sin();
        assert_relative_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn errors_propagate_from_function() {
        let sp = sigma_points_isotropic(&v(&[0.5]), 0.01, 2.0).unwrap();
        let r = unscented_mean(|_| Err(Error::Evaluation("nope".into())), &sp);
        assert!(matches!(r, Err(Error::Evaluation(_))));
    }

    #[test]
    fn clamping_keeps_points_in_cube() {
        let sp = sigma_points_isotropic(&v(&[0.95, 0.02]), 0.04, 2.0)
            .unwrap()
            .clamp_to_cube();
        assert!(sp
            .points()
            .iter()
            .flat_map(|p| p.iter())
            .all(|x| (0.0..=1.0).contains(x)));
    }
}
