//! Joint diagonal Gaussian mixture over `(x, y)` fitted by EM, with
//! analytic conditioning on `x`.

use rand::Rng;

use super::{Capabilities, ConditionalModel, Query};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::mixture::{log_sum_exp, normal_log_pdf, GaussianMixture, VARIANCE_FLOOR};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub components: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop when the log-likelihood changes by less than `tol · |loglik|`.
    pub tol: f64,
}

impl EmConfig {
    pub fn new(components: usize, seed: u64) -> Self {
        Self {
            components,
            seed,
            max_iter: 500,
            tol: 1e-7,
        }
    }
}

const MAX_RESEEDS: usize = 3;
const EMPTY_MASS: f64 = 1e-10;

/// A fitted joint mixture; the first `d` coordinates are features.
#[derive(Debug, Clone)]
pub struct JointGmmModel {
    joint: GaussianMixture,
    d: usize,
    loglik_trace: Vec<f64>,
    /// Trace indices at which a collapsed component was re-seeded; the
    /// log-likelihood is only monotone between these points.
    reseeds: Vec<usize>,
}

impl JointGmmModel {
    pub fn from_joint(joint: GaussianMixture, d: usize) -> Result<Self> {
        if d == 0 || d >= joint.dim() {
            return Err(Error::Validation(format!(
                "feature dimension {d} incompatible with joint dimension {}",
                joint.dim()
            )));
        }
        Ok(Self {
            joint,
            d,
            loglik_trace: Vec::new(),
            reseeds: Vec::new(),
        })
    }

    pub fn joint(&self) -> &GaussianMixture {
        &self.joint
    }

    pub fn feature_dim(&self) -> usize {
        self.d
    }

    /// Log-likelihood evaluated at the start of every EM iteration.
    pub fn loglik_trace(&self) -> &[f64] {
        &self.loglik_trace
    }

    pub fn reseeds(&self) -> &[usize] {
        &self.reseeds
    }

    /// Conditional mixture of `y` given `x`. With diagonal covariances the
    /// components keep their `y`-marginals and only the weights move:
    /// `w_ℓ ∝ π_ℓ N(x; μ_ℓ^x, Σ_ℓ^x)`.
    pub fn condition(&self, x: &[f64]) -> Result<GaussianMixture> {
        if x.len() != self.d || !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain(format!("expected {} finite features", self.d)));
        }
        let k = self.joint.n_components();
        let mut log_w = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k);
        let mut vars = Vec::with_capacity(k);
        for l in 0..k {
            let w = self.joint.weights()[l];
            let mu = &self.joint.means()[l];
            let var = &self.joint.variances()[l];
            let lx: f64 = (0..self.d).map(|j| normal_log_pdf(x[j], mu[j], var[j])).sum();
            log_w.push(if w > 0.0 { w.ln() + lx } else { f64::NEG_INFINITY });
            means.push(mu[self.d..].to_vec());
            vars.push(var[self.d..].to_vec());
        }
        GaussianMixture::from_log_weights(&log_w, means, vars)
    }
}

impl ConditionalModel for JointGmmModel {
    fn capabilities(&self) -> Capabilities {
        Capabilities::BOTH
    }

    fn conditional(&self, q: &Query<'_>) -> Result<GaussianMixture> {
        self.condition(q.x)
    }
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
}

fn concat_rows(data: &Dataset) -> Vec<Vec<f64>> {
    data.iter()
        .map(|s| s.x.iter().chain(&s.y).copied().collect())
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn global_variance(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let dim = rows[0].len();
    (0..dim)
        .map(|j| {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            (rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n).max(VARIANCE_FLOOR)
        })
        .collect()
}

/// k-means++ style seeding: first center uniform, then proportional to the
/// squared distance to the nearest chosen center.
fn seed_centers<R: Rng>(rows: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centers = vec![rows[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, v) in d2.iter().enumerate() {
                if u < *v {
                    pick = i;
                    break;
                }
                u -= v;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = rows[idx].clone();
        for (di, r) in d2.iter_mut().zip(rows) {
            *di = di.min(sq_dist(r, &c));
        }
        centers.push(c);
    }
    centers
}

/// Log-likelihood and responsibilities under `p`.
fn e_step(rows: &[Vec<f64>], p: &Params, resp: &mut [Vec<f64>]) -> f64 {
    let k = p.weights.len();
    let log_w: Vec<f64> = p.weights.iter().map(|w| w.ln()).collect();
    let mut ll = 0.0;
    let mut buf = vec![0.0; k];
    for (row, r) in rows.iter().zip(resp.iter_mut()) {
        for l in 0..k {
            buf[l] = log_w[l]
                + row
                    .iter()
                    .zip(&p.means[l])
                    .zip(&p.vars[l])
                    .map(|((y, m), v)| normal_log_pdf(*y, *m, *v))
                    .sum::<f64>();
        }
        let lse = log_sum_exp(buf.iter().copied());
        ll += lse;
        for l in 0..k {
            r[l] = (buf[l] - lse).exp();
        }
    }
    ll
}

/// Fits a `k`-component diagonal mixture to the concatenated `(x, y)` rows.
pub fn gmm_fit_em(data: &Dataset, cfg: &EmConfig) -> Result<JointGmmModel> {
    let k = cfg.components;
    let n = data.len();
    if k == 0 {
        return Err(Error::Fit("component count must be ≥ 1".into()));
    }
    if n < k {
        return Err(Error::Fit(format!("{n} samples cannot support {k} components")));
    }
    let rows = concat_rows(data);
    let dim = rows[0].len();
    let mut rng = rng::stream(cfg.seed, Domain::Fit, 0);
    let gvar = global_variance(&rows);

    let mut params = Params {
        weights: vec![1.0 / k as f64; k],
        means: seed_centers(&rows, k, &mut rng),
        vars: vec![gvar.clone(); k],
    };
    let mut resp = vec![vec![0.0; k]; n];
    let mut trace = Vec::new();
    let mut reseeds = Vec::new();
    let mut prev: Option<f64> = None;

    for _ in 0..cfg.max_iter {
        let ll = e_step(&rows, &params, &mut resp);
        if !ll.is_finite() {
            return Err(Error::Numerical("EM log-likelihood is not finite".into()));
        }
        trace.push(ll);
        if let Some(p) = prev {
            if (ll - p).abs() <= cfg.tol * p.abs() {
                break;
            }
        }
        prev = Some(ll);

        // M-step
        let mut collapsed = false;
        for l in 0..k {
            let nk: f64 = resp.iter().map(|r| r[l]).sum();
            if nk < EMPTY_MASS {
                if reseeds.len() >= MAX_RESEEDS {
                    return Err(Error::Fit(format!(
                        "component {l} collapsed after {MAX_RESEEDS} re-seeds"
                    )));
                }
                params.means[l] = rows[rng.random_range(0..n)].clone();
                params.vars[l] = gvar.clone();
                params.weights[l] = 1.0 / k as f64;
                collapsed = true;
                continue;
            }
            let mut mean = vec![0.0; dim];
            for (row, r) in rows.iter().zip(&resp) {
                for j in 0..dim {
                    mean[j] += r[l] * row[j];
                }
            }
            mean.iter_mut().for_each(|m| *m /= nk);
            let mut var = vec![0.0; dim];
            for (row, r) in rows.iter().zip(&resp) {
                for j in 0..dim {
                    var[j] += r[l] * (row[j] - mean[j]).powi(2);
                }
            }
            var.iter_mut().for_each(|v| *v = (*v / nk).max(VARIANCE_FLOOR));
            params.weights[l] = nk / n as f64;
            params.means[l] = mean;
            params.vars[l] = var;
        }
        if collapsed {
            let s: f64 = params.weights.iter().sum();
            params.weights.iter_mut().for_each(|w| *w /= s);
            reseeds.push(trace.len());
            prev = None;
        }
    }

    let s: f64 = params.weights.iter().sum();
    let weights: Vec<f64> = params.weights.iter().map(|w| w / s).collect();
    let joint = GaussianMixture::new(weights, params.means, params.vars)?;
    Ok(JointGmmModel {
        joint,
        d: data.feature_dim(),
        loglik_trace: trace,
        reseeds,
    })
}
