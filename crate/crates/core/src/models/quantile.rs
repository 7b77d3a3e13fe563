//! Conditional quantile regressors used as base models for CQR.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::order::{ceil_snapped, sorted_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum QuantileMethod {
    /// Level-quantile of the `k` nearest training responses; `k` defaults to
    /// `⌈√n⌉`.
    Knn {
        #[serde(default)]
        k: Option<usize>,
    },
    /// One linear model per level, fit by subgradient descent on the pinball
    /// loss.
    LinearPinball {
        #[serde(default = "default_epochs")]
        epochs: usize,
    },
}

fn default_epochs() -> usize {
    2000
}

impl Default for QuantileMethod {
    fn default() -> Self {
        QuantileMethod::Knn { k: None }
    }
}

type QuantileFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum State {
    Knn {
        k: usize,
        xs: Vec<Vec<f64>>,
        ys: Vec<f64>,
    },
    Linear {
        x_mean: Vec<f64>,
        x_std: Vec<f64>,
        y_mean: f64,
        y_std: f64,
        /// Per level: intercept followed by one weight per feature, in
        /// standardized units.
        coefs: Vec<Vec<f64>>,
    },
    Given(QuantileFn),
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Knn { k, xs, .. } => write!(f, "Knn {{ k: {k}, n: {} }}", xs.len()),
            State::Linear { coefs, .. } => write!(f, "Linear {{ coefs: {coefs:?} }}"),
            State::Given(_) => f.write_str("Given"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuantileRegressor {
    levels: Vec<f64>,
    state: State,
}

pub fn fit_quantile_regressor(train: &Dataset, levels: &[f64], method: QuantileMethod) -> Result<QuantileRegressor> {
    if train.response_dim() != 1 {
        return Err(Error::Fit("quantile regression needs a scalar response".into()));
    }
    if levels.is_empty() || levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(Error::Fit(format!("quantile levels must lie in (0, 1): {levels:?}")));
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let n = train.len();
    let state = match method {
        QuantileMethod::Knn { k } => {
            let k = k.unwrap_or_else(|| ceil_snapped((n as f64).sqrt()) as usize);
            if k == 0 || k > n {
                return Err(Error::Fit(format!("knn needs 1 ≤ k ≤ n, got k={k}, n={n}")));
            }
            State::Knn {
                k,
                xs: train.xs(),
                ys: train.ys(),
            }
        }
        QuantileMethod::LinearPinball { epochs } => fit_linear(train, &sorted, epochs),
    };
    Ok(QuantileRegressor { levels: sorted, state })
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    let s = (v.map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    (m, if s > 0.0 { s } else { 1.0 })
}

fn fit_linear(train: &Dataset, levels: &[f64], epochs: usize) -> State {
    let d = train.feature_dim();
    let n = train.len();
    let (x_mean, x_std): (Vec<f64>, Vec<f64>) = (0..d)
        .map(|j| mean_std(train.iter().map(move |s| s.x[j])))
        .unzip();
    let ys = train.ys();
    let (y_mean, y_std) = mean_std(ys.iter().copied());
    let z: Vec<Vec<f64>> = train
        .iter()
        .map(|s| (0..d).map(|j| (s.x[j] - x_mean[j]) / x_std[j]).collect())
        .collect();
    let u: Vec<f64> = ys.iter().map(|y| (y - y_mean) / y_std).collect();
    let mut u_sorted = u.clone();
    u_sorted.sort_by(f64::total_cmp);

    let coefs = levels
        .iter()
        .map(|&level| {
            let mut c = vec![0.0; d + 1];
            c[0] = sorted_quantile(&u_sorted, level);
            let mut grad = vec![0.0; d + 1];
            for epoch in 1..=epochs {
                grad.iter_mut().for_each(|g| *g = 0.0);
                for (zi, ui) in z.iter().zip(&u) {
                    let pred = c[0] + zi.iter().zip(&c[1..]).map(|(a, b)| a * b).sum::<f64>();
                    // d/dpred of the pinball loss at residual u - pred
                    let g = if *ui > pred { -level } else if *ui < pred { 1.0 - level } else { 0.0 };
                    grad[0] += g;
                    for j in 0..d {
                        grad[j + 1] += g * zi[j];
                    }
                }
                let step = 0.01 / (epoch as f64).sqrt();
                for (cj, gj) in c.iter_mut().zip(&grad) {
                    *cj -= step * gj / n as f64;
                }
            }
            c
        })
        .collect();
    State::Linear {
        x_mean,
        x_std,
        y_mean,
        y_std,
        coefs,
    }
}

impl QuantileRegressor {
    /// Wraps known quantile functions `q(x, level)`, e.g. the true
    /// conditional quantiles of a synthetic process.
    pub fn from_fn<F>(levels: &[f64], q: F) -> Result<Self>
    where
        F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        if levels.is_empty() || levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(Error::Fit(format!("quantile levels must lie in (0, 1): {levels:?}")));
        }
        let mut sorted = levels.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        Ok(Self {
            levels: sorted,
            state: State::Given(Arc::new(q)),
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Predicted quantiles at every fitted level, sorted so they are
    /// monotone in the level.
    pub fn predict_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = match &self.state {
            State::Knn { k, xs, ys } => {
                if x.len() != xs[0].len() {
                    return Err(Error::Domain(format!("expected {} features", xs[0].len())));
                }
                let mut dist: Vec<(f64, f64)> = xs
                    .iter()
                    .zip(ys)
                    .map(|(xi, y)| (xi.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), *y))
                    .collect();
                if *k < dist.len() {
                    dist.select_nth_unstable_by(*k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
                }
                let mut near: Vec<f64> = dist[..*k].iter().map(|p| p.1).collect();
                near.sort_by(f64::total_cmp);
                self.levels.iter().map(|&l| sorted_quantile(&near, l)).collect::<Vec<_>>()
            }
            State::Linear {
                x_mean,
                x_std,
                y_mean,
                y_std,
                coefs,
            } => {
                if x.len() != x_mean.len() {
                    return Err(Error::Domain(format!("expected {} features", x_mean.len())));
                }
                coefs
                    .iter()
                    .map(|c| {
                        let u = c[0]
                            + (0..x.len())
                                .map(|j| c[j + 1] * (x[j] - x_mean[j]) / x_std[j])
                                .sum::<f64>();
                        y_mean + y_std * u
                    })
                    .collect()
            }
            State::Given(q) => self.levels.iter().map(|&l| q(x, l)).collect(),
        };
        if out.iter().any(|v| v.is_nan()) {
            return Err(Error::Numerical(format!("quantile prediction is NaN at x = {x:?}")));
        }
        out.sort_by(f64::total_cmp);
        Ok(out)
    }

    /// Rearranged quantile at a fitted `level`.
    pub fn predict_quantile(&self, x: &[f64], level: f64) -> Result<f64> {
        let i = self
            .levels
            .iter()
            .position(|l| (l - level).abs() < 1e-12)
            .ok_or_else(|| Error::Domain(format!("level {level} was not fitted")))?;
        Ok(self.predict_all(x)?[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledSample;
    use crate::rng::{self, Domain};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn hetero(n: usize, seed: u64) -> Dataset {
        let mut r = rng::stream(seed, Domain::Custom(21), 0);
        Dataset::new(
            (0..n)
                .map(|_| {
                    let x: f64 = r.random_range(0.0..3.0);
                    let e: f64 = StandardNormal.sample(&mut r);
                    LabeledSample::scalar(vec![x], x * e)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_response() {
        let ds = Dataset::new((0..50).map(|i| LabeledSample::scalar(vec![i as f64], 3.5)).collect()).unwrap();
        for method in [QuantileMethod::Knn { k: None }, QuantileMethod::LinearPinball { epochs: 50 }] {
            let q = fit_quantile_regressor(&ds, &[0.05, 0.5, 0.95], method).unwrap();
            for x in [0.0, 10.0, 49.0] {
                for v in q.predict_all(&[x]).unwrap() {
                    assert!((v - 3.5).abs() < 1e-12, "{method:?}: {v}");
                }
            }
        }
    }

    #[test]
    fn knn_with_all_points_is_global_quantile() {
        let ds = hetero(200, 4);
        let q = fit_quantile_regressor(&ds, &[0.1, 0.9], QuantileMethod::Knn { k: Some(200) }).unwrap();
        let mut ys = ds.ys();
        ys.sort_by(f64::total_cmp);
        for x in [0.1, 1.7] {
            assert_eq!(q.predict_quantile(&[x], 0.1).unwrap(), ys[19]);
            assert_eq!(q.predict_quantile(&[x], 0.9).unwrap(), ys[179]);
        }
    }

    #[test]
    fn knn_tracks_heteroskedastic_quantile() {
        let ds = hetero(10_000, 9);
        let q = fit_quantile_regressor(&ds, &[0.95], QuantileMethod::Knn { k: Some(400) }).unwrap();
        for x in [1.0, 1.25, 1.5, 1.75, 2.0] {
            let v = q.predict_quantile(&[x], 0.95).unwrap();
            let truth = 1.6448536269514722 * x;
            assert!((v - truth).abs() < 0.15 * truth, "x={x}: {v} vs {truth}");
        }
    }

    #[test]
    fn k_larger_than_n() {
        let ds = hetero(10, 1);
        assert!(matches!(
            fit_quantile_regressor(&ds, &[0.5], QuantileMethod::Knn { k: Some(11) }),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn linear_pinball_orders_levels() {
        let ds = hetero(2000, 2);
        let q = fit_quantile_regressor(&ds, &[0.05, 0.5, 0.95], QuantileMethod::LinearPinball { epochs: 2000 }).unwrap();
        for x in [0.0, 1.0, 2.9] {
            let v = q.predict_all(&[x]).unwrap();
            assert!(v[0] <= v[1] && v[1] <= v[2]);
        }
        // the spread widens with x
        let lo = q.predict_all(&[0.2]).unwrap();
        let hi = q.predict_all(&[2.8]).unwrap();
        assert!(hi[2] - hi[0] > lo[2] - lo[0]);
    }
}
