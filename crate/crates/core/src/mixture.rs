//! Diagonal-covariance Gaussian mixtures: density, CDF, sampling.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Lower bound applied to every component variance.
pub const VARIANCE_FLOOR: f64 = 1e-8;

const WEIGHT_TOL: f64 = 1e-10;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Log density of `N(mean, var)` at `y`.
#[inline]
pub fn normal_log_pdf(y: f64, mean: f64, var: f64) -> f64 {
    let d = y - mean;
    -0.5 * ((2.0 * PI * var).ln() + d * d / var)
}

/// `log Σ exp(v_i)`, `-∞` for an empty or all-`-∞` input.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.into_iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// A finite mixture of Gaussians with diagonal covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl GaussianMixture {
    /// Validates shapes and weights; variances below [`VARIANCE_FLOOR`] are
    /// raised to the floor.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::Validation("mixture needs at least one component".into()));
        }
        if means.len() != k || variances.len() != k {
            return Err(Error::Validation("weights, means and variances differ in length".into()));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().chain(&variances).any(|v| v.len() != dim) {
            return Err(Error::Validation("inconsistent component dimensions".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Validation(format!("weights must be finite and non-negative: {weights:?}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Validation(format!("weights sum to {total}, expected 1")));
        }
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::Validation("non-finite component mean".into()));
        }
        if variances.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Validation("variances must be finite and non-negative".into()));
        }
        let variances = variances
            .into_iter()
            .map(|v| v.into_iter().map(|s| s.max(VARIANCE_FLOOR)).collect())
            .collect();
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    /// Scalar mixture from weights, means and standard deviations.
    pub fn univariate(weights: &[f64], means: &[f64], sds: &[f64]) -> Result<Self> {
        Self::new(
            weights.to_vec(),
            means.iter().map(|&m| vec![m]).collect(),
            sds.iter().map(|&s| vec![s * s]).collect(),
        )
    }

    pub fn standard_normal() -> Self {
        Self::univariate(&[1.0], &[0.0], &[1.0]).expect("valid")
    }

    /// Builds a mixture from unnormalized log-weights (log-sum-exp
    /// normalization). Fails only when every weight underflows.
    pub fn from_log_weights(log_w: &[f64], means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let lse = log_sum_exp(log_w.iter().copied());
        if !lse.is_finite() {
            return Err(Error::Numerical("all component weights underflow".into()));
        }
        let mut w: Vec<f64> = log_w.iter().map(|l| (l - lse).exp()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        Self::new(w, means, variances)
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    fn component_log_pdf(&self, l: usize, y: &[f64]) -> f64 {
        self.means[l]
            .iter()
            .zip(&self.variances[l])
            .zip(y)
            .map(|((m, v), yi)| normal_log_pdf(*yi, *m, *v))
            .sum()
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.dim());
        let terms = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(l, w)| w.ln() + self.component_log_pdf(l, y));
        log_sum_exp(terms.collect::<Vec<_>>())
    }

    pub fn density(&self, y: &[f64]) -> f64 {
        self.log_density(y).exp()
    }

    /// Scalar density; sums components directly (no allocation).
    pub fn density1(&self, y: f64) -> f64 {
        let mut s = 0.0;
        for l in 0..self.weights.len() {
            let w = self.weights[l];
            if w > 0.0 {
                s += w * normal_log_pdf(y, self.means[l][0], self.variances[l][0]).exp();
            }
        }
        s
    }

    /// Scalar CDF.
    pub fn cdf1(&self, y: f64) -> f64 {
        let mut s = 0.0;
        for l in 0..self.weights.len() {
            let w = self.weights[l];
            if w > 0.0 {
                s += w * normal_cdf((y - self.means[l][0]) / self.variances[l][0].sqrt());
            }
        }
        s.clamp(0.0, 1.0)
    }

    /// Mixture mass of a closed interval.
    pub fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        if !(lo <= hi) {
            return 0.0;
        }
        // upper tail computed through erfc keeps precision far from the mean
        let mut s = 0.0;
        for l in 0..self.weights.len() {
            let w = self.weights[l];
            if w > 0.0 {
                let sd = self.variances[l][0].sqrt();
                let m = self.means[l][0];
                let a = (lo - m) / sd;
                let b = (hi - m) / sd;
                let p = if a > 0.0 {
                    normal_cdf(-a) - normal_cdf(-b)
                } else {
                    normal_cdf(b) - normal_cdf(a)
                };
                s += w * p;
            }
        }
        s.clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, m) in self.weights.iter().zip(&self.means) {
            for (o, mi) in out.iter_mut().zip(m) {
                *o += w * mi;
            }
        }
        out
    }

    /// Scalar quantile by bisection on the CDF.
    pub fn quantile1(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {level}")));
        }
        let (mut lo, mut hi) = self.support_bracket1();
        while self.cdf1(lo) > level {
            lo -= hi - lo;
        }
        while self.cdf1(hi) < level {
            hi += hi - lo;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf1(mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * (1.0 + mid.abs()) {
                break;
            }
        }
        Ok(hi)
    }

    /// `[min μ - 8 σ_max, max μ + 8 σ_max]` for a scalar mixture.
    pub fn support_bracket1(&self) -> (f64, f64) {
        let sd_max = self
            .variances
            .iter()
            .map(|v| v[0].sqrt())
            .fold(0.0, f64::max);
        let lo = self.means.iter().map(|m| m[0]).fold(f64::INFINITY, f64::min);
        let hi = self.means.iter().map(|m| m[0]).fold(f64::NEG_INFINITY, f64::max);
        (lo - 8.0 * sd_max, hi + 8.0 * sd_max)
    }

    fn pick_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (l, w) in self.weights.iter().enumerate() {
            if *w > 0.0 {
                last_positive = l;
                acc += w;
                if u < acc {
                    return l;
                }
            }
        }
        last_positive
    }

    /// `count` i.i.d. draws: component by weight, then a Gaussian draw.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                let l = self.pick_component(rng);
                self.means[l]
                    .iter()
                    .zip(&self.variances[l])
                    .map(|(m, v)| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + v.sqrt() * z
                    })
                    .collect()
            })
            .collect()
    }

    /// Scalar draws.
    pub fn sample1<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        (0..count)
            .map(|_| {
                let l = self.pick_component(rng);
                let z: f64 = rng.sample(StandardNormal);
                self.means[l][0] + self.variances[l][0].sqrt() * z
            })
            .collect()
    }

    /// Same mixture with every mean moved by `shift` (all coordinates).
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            weights: self.weights.clone(),
            means: self
                .means
                .iter()
                .map(|m| m.iter().map(|v| v + shift).collect())
                .collect(),
            variances: self.variances.clone(),
        }
    }
}

/// Total variation distance between `N(a, σ²)` and `N(b, σ²)`.
pub fn tv_shifted_normals(shift: f64, sd: f64) -> f64 {
    2.0 * normal_cdf(shift.abs() / (2.0 * sd)) - 1.0
}
