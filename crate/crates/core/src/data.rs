//! Synthetic data-generating processes with closed-form conditionals.

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::mixture::{normal_log_pdf, GaussianMixture};
use crate::models::{Capabilities, ConditionalModel, Query};
use crate::rng::Stream;

/// `x ~ U[x_lo, x_hi]`; `y | x ~ ½N(a·x − g(x), sd²) + ½N(a·x + g(x), sd²)`
/// with `g(x) = b0 + b1·x`, so the two modes drift apart as `x` grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bimodal1D {
    pub x_lo: f64,
    pub x_hi: f64,
    pub a: f64,
    pub b0: f64,
    pub b1: f64,
    pub sd: f64,
}

impl Default for Bimodal1D {
    fn default() -> Self {
        Self {
            x_lo: 0.0,
            x_hi: 5.0,
            a: 0.2,
            b0: 1.0,
            b1: 0.3,
            sd: 0.25,
        }
    }
}

/// Joint mixture of four diagonal Gaussians over `(x, y)` centered at
/// `(±offset, ±offset)` with common standard deviation `sd`. Weights are
/// listed for the centers `(−,−), (−,+), (+,−), (+,+)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Gmm4 {
    pub weights: [f64; 4],
    pub offset: f64,
    pub sd: f64,
}

impl Default for Gmm4 {
    fn default() -> Self {
        Self {
            weights: [0.25; 4],
            offset: 2.0,
            sd: 0.6,
        }
    }
}

impl Gmm4 {
    fn centers(&self) -> [(f64, f64); 4] {
        let o = self.offset;
        [(-o, -o), (-o, o), (o, -o), (o, o)]
    }

    pub fn joint(&self) -> Result<GaussianMixture> {
        let v = self.sd * self.sd;
        GaussianMixture::new(
            self.weights.to_vec(),
            self.centers().iter().map(|c| vec![c.0, c.1]).collect(),
            vec![vec![v, v]; 4],
        )
    }
}

/// `x ~ U[0, 1]`, `y = (1 + x)·ε` with `ε ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hetero1D {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum SyntheticDgp {
    Bimodal1d(Bimodal1D),
    Gmm4(Gmm4),
    Hetero1d(Hetero1D),
}

impl SyntheticDgp {
    pub fn name(&self) -> &'static str {
        match self {
            SyntheticDgp::Bimodal1d(_) => "bimodal1d",
            SyntheticDgp::Gmm4(_) => "gmm4",
            SyntheticDgp::Hetero1d(_) => "hetero1d",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{}: {m}", self.name())));
        match self {
            SyntheticDgp::Bimodal1d(p) => {
                if !(p.x_lo < p.x_hi) || !(p.sd > 0.0) {
                    return bad("needs x_lo < x_hi and sd > 0");
                }
            }
            SyntheticDgp::Gmm4(p) => {
                p.joint().map_err(|e| Error::Config(format!("gmm4: {e}")))?;
                if !(p.sd > 0.0) {
                    return bad("needs sd > 0");
                }
            }
            SyntheticDgp::Hetero1d(_) => {}
        }
        Ok(())
    }
}

impl FromStr for SyntheticDgp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bimodal1d" => Ok(SyntheticDgp::Bimodal1d(Bimodal1D::default())),
            "gmm4" => Ok(SyntheticDgp::Gmm4(Gmm4::default())),
            "hetero1d" => Ok(SyntheticDgp::Hetero1d(Hetero1D::default())),
            _ => Err(Error::Config(format!(
                "unknown data-generating process `{s}` (expected bimodal1d, gmm4 or hetero1d)"
            ))),
        }
    }
}

/// `n` i.i.d. draws.
pub fn dgp_sample(dgp: &SyntheticDgp, n: usize, rng: &mut Stream) -> Result<Dataset> {
    dgp.validate()?;
    if n == 0 {
        return Err(Error::Degenerate("sample size must be at least 1".into()));
    }
    let samples = match dgp {
        SyntheticDgp::Bimodal1d(p) => (0..n)
            .map(|_| {
                let x = rng.random_range(p.x_lo..p.x_hi);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let z: f64 = StandardNormal.sample(rng);
                let y = p.a * x + sign * (p.b0 + p.b1 * x) + p.sd * z;
                LabeledSample::scalar(vec![x], y)
            })
            .collect(),
        SyntheticDgp::Gmm4(p) => {
            let joint = p.joint()?;
            joint
                .sample(n, rng)
                .into_iter()
                .map(|v| LabeledSample::scalar(vec![v[0]], v[1]))
                .collect()
        }
        SyntheticDgp::Hetero1d(_) => (0..n)
            .map(|_| {
                let x = rng.random_range(0.0..1.0);
                let e: f64 = StandardNormal.sample(rng);
                LabeledSample::scalar(vec![x], (1.0 + x) * e)
            })
            .collect(),
    };
    Dataset::new(samples)
}

/// Exact conditional distribution of `y` given `x`.
pub fn dgp_conditional(dgp: &SyntheticDgp, x: &[f64]) -> Result<GaussianMixture> {
    if x.len() != 1 || !x[0].is_finite() {
        return Err(Error::Domain("synthetic processes have one finite feature".into()));
    }
    let x = x[0];
    match dgp {
        SyntheticDgp::Bimodal1d(p) => {
            let c = p.a * x;
            let g = p.b0 + p.b1 * x;
            GaussianMixture::univariate(&[0.5, 0.5], &[c - g, c + g], &[p.sd, p.sd])
        }
        SyntheticDgp::Gmm4(p) => {
            let v = p.sd * p.sd;
            let centers = p.centers();
            let log_w: Vec<f64> = p
                .weights
                .iter()
                .zip(&centers)
                .map(|(w, c)| if *w > 0.0 { w.ln() + normal_log_pdf(x, c.0, v) } else { f64::NEG_INFINITY })
                .collect();
            GaussianMixture::from_log_weights(
                &log_w,
                centers.iter().map(|c| vec![c.1]).collect(),
                vec![vec![v]; 4],
            )
        }
        SyntheticDgp::Hetero1d(_) => GaussianMixture::univariate(&[1.0], &[0.0], &[1.0 + x]),
    }
}

/// The true conditional of a synthetic process as a model.
#[derive(Debug, Clone, Copy)]
pub struct OracleModel(pub SyntheticDgp);

pub fn oracle_model(dgp: SyntheticDgp) -> OracleModel {
    OracleModel(dgp)
}

impl ConditionalModel for OracleModel {
    fn capabilities(&self) -> Capabilities {
        Capabilities::BOTH
    }

    fn conditional(&self, q: &Query<'_>) -> Result<GaussianMixture> {
        dgp_conditional(&self.0, q.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};

    #[test]
    fn hetero_conditional_at_one() {
        let m = dgp_conditional(&SyntheticDgp::Hetero1d(Hetero1D {}), &[1.0]).unwrap();
        assert_eq!(m.weights(), &[1.0]);
        assert_eq!(m.means(), &[vec![0.0]]);
        assert_eq!(m.variances(), &[vec![4.0]]);
    }

    #[test]
    fn bimodal_has_two_equal_components() {
        let m = dgp_conditional(&"bimodal1d".parse().unwrap(), &[4.0]).unwrap();
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert!((m.means()[0][0] - (0.8 - 2.2)).abs() < 1e-12);
        assert!((m.means()[1][0] - (0.8 + 2.2)).abs() < 1e-12);
    }

    #[test]
    fn gmm4_conditional_is_bayes_rule() {
        let p = Gmm4 {
            weights: [0.4, 0.1, 0.1, 0.4],
            ..Gmm4::default()
        };
        let m = dgp_conditional(&SyntheticDgp::Gmm4(p), &[1.3]).unwrap();
        let joint = p.joint().unwrap();
        // brute force: p(x, y) / Σ_y-components
        for y in [-2.5, 0.0, 1.7] {
            let px: f64 = (0..4)
                .map(|l| p.weights[l] * normal_log_pdf(1.3, joint.means()[l][0], 0.36).exp())
                .sum();
            let want = joint.density(&[1.3, y]) / px;
            assert!((m.density1(y) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn samples_are_reproducible() {
        for dgp in ["bimodal1d", "gmm4", "hetero1d"] {
            let d: SyntheticDgp = dgp.parse().unwrap();
            let a = dgp_sample(&d, 20, &mut rng::stream(4, Domain::Data, 0)).unwrap();
            let b = dgp_sample(&d, 20, &mut rng::stream(4, Domain::Data, 0)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn config_round_trip() {
        let d: SyntheticDgp = serde_json::from_str(r#"{"name":"gmm4","weights":[0.4,0.1,0.1,0.4]}"#).unwrap();
        assert_eq!(
            d,
            SyntheticDgp::Gmm4(Gmm4 {
                weights: [0.4, 0.1, 0.1, 0.4],
                ..Gmm4::default()
            })
        );
        assert!(serde_json::from_str::<SyntheticDgp>(r#"{"name":"gmm4","bogus":1}"#).is_err());
        assert!("chr".parse::<SyntheticDgp>().is_err());
    }
}
