//! Conditional models of `Y | X`.
//!
//! A model exposes up to two capabilities: an explicit conditional density
//! (here always a [`GaussianMixture`]) and a sampler. Every model in this
//! crate is mixture-backed, so the sampler defaults to drawing from the
//! conditional mixture; [`ImplicitOnly`] hides the density for callers that
//! must work from draws alone.

mod ingest;
mod joint_gmm;
mod quantile;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::rng::Stream;

pub use ingest::{read_mixture_file, write_mixture_file, IngestedModel, MixtureRecord, MixtureTable, MIXTURE_HEADER};
pub use joint_gmm::{gmm_fit_em, EmConfig, JointGmmModel};
pub use quantile::{fit_quantile_regressor, QuantileMethod, QuantileRegressor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    /// The conditional density can be evaluated.
    pub explicit: bool,
    /// The conditional distribution can be sampled.
    pub implicit: bool,
}

impl Capabilities {
    pub const BOTH: Capabilities = Capabilities {
        explicit: true,
        implicit: true,
    };
}

/// Which part of an experiment a point belongs to. Models fitted on `x`
/// ignore it; per-point tables (ingested mixtures) are keyed by it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Calib,
    Test,
    Other,
}

/// A point at which a conditional model is queried.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub x: &'a [f64],
    pub role: Role,
    pub index: usize,
}

impl<'a> Query<'a> {
    pub fn at(x: &'a [f64]) -> Self {
        Self {
            x,
            role: Role::Other,
            index: 0,
        }
    }

    pub fn new(x: &'a [f64], role: Role, index: usize) -> Self {
        Self { x, role, index }
    }
}

/// An estimate `Π_{Y|X}` of the conditional distribution.
pub trait ConditionalModel: Send + Sync {
    fn capabilities(&self) -> Capabilities;

    /// The conditional mixture at `q.x`. Fails with a capability error on
    /// models without an explicit density.
    fn conditional(&self, q: &Query<'_>) -> Result<GaussianMixture>;

    /// `count` draws from the conditional at `q.x`.
    fn sample(&self, q: &Query<'_>, count: usize, rng: &mut Stream) -> Result<Vec<Vec<f64>>> {
        if !self.capabilities().implicit {
            return Err(Error::Capability("model cannot be sampled".into()));
        }
        Ok(self.conditional(q)?.sample(count, rng))
    }

    /// Conditional density at `(x, y)`.
    fn density(&self, q: &Query<'_>, y: &[f64]) -> Result<f64> {
        Ok(self.conditional(q)?.density(y))
    }
}

impl<M: ConditionalModel + ?Sized> ConditionalModel for Arc<M> {
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }

    fn conditional(&self, q: &Query<'_>) -> Result<GaussianMixture> {
        (**self).conditional(q)
    }

    fn sample(&self, q: &Query<'_>, count: usize, rng: &mut Stream) -> Result<Vec<Vec<f64>>> {
        (**self).sample(q, count, rng)
    }
}

/// A model defined by a function from `x` to the conditional mixture.
pub struct MixtureFn<F> {
    f: F,
}

impl<F> MixtureFn<F>
where
    F: Fn(&[f64]) -> GaussianMixture + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> ConditionalModel for MixtureFn<F>
where
    F: Fn(&[f64]) -> GaussianMixture + Send + Sync,
{
    fn capabilities(&self) -> Capabilities {
        Capabilities::BOTH
    }

    fn conditional(&self, q: &Query<'_>) -> Result<GaussianMixture> {
        Ok((self.f)(q.x))
    }
}

/// The same mixture at every `x`.
#[derive(Debug, Clone)]
pub struct ConstantModel(pub GaussianMixture);

impl ConditionalModel for ConstantModel {
    fn capabilities(&self) -> Capabilities {
        Capabilities::BOTH
    }

    fn conditional(&self, _q: &Query<'_>) -> Result<GaussianMixture> {
        Ok(self.0.clone())
    }
}

/// Hides the explicit density of the wrapped model; only sampling remains.
pub struct ImplicitOnly<M>(pub M);

impl<M: ConditionalModel> ConditionalModel for ImplicitOnly<M> {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            explicit: false,
            implicit: self.0.capabilities().implicit,
        }
    }

    fn conditional(&self, _q: &Query<'_>) -> Result<GaussianMixture> {
        Err(Error::Capability("model has no explicit density".into()))
    }

    fn sample(&self, q: &Query<'_>, count: usize, rng: &mut Stream) -> Result<Vec<Vec<f64>>> {
        self.0.sample(q, count, rng)
    }
}

/// A model whose conditional means are shifted by a constant. Used to
/// dial in a known total-variation distance from the wrapped model.
pub struct PerturbedModel<M> {
    inner: M,
    mean_shift: f64,
}

/// Wraps `m` with its `y`-means moved by `mean_shift`. Requires an explicit
/// model.
pub fn perturb_model<M: ConditionalModel>(m: M, mean_shift: f64) -> Result<PerturbedModel<M>> {
    if !m.capabilities().explicit {
        return Err(Error::Capability("perturbation needs an explicit model".into()));
    }
    if !mean_shift.is_finite() {
        return Err(Error::Domain(format!("mean shift must be finite, got {mean_shift}")));
    }
    Ok(PerturbedModel { inner: m, mean_shift })
}

impl<M: ConditionalModel> PerturbedModel<M> {
    pub fn mean_shift(&self) -> f64 {
        self.mean_shift
    }
}

impl<M: ConditionalModel> ConditionalModel for PerturbedModel<M> {
    fn capabilities(&self) -> Capabilities {
        Capabilities::BOTH
    }

    fn conditional(&self, q: &Query<'_>) -> Result<GaussianMixture> {
        Ok(self.inner.conditional(q)?.shifted(self.mean_shift))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::tv_shifted_normals;
    use crate::rng::{self, Domain};

    fn normal() -> ConstantModel {
        ConstantModel(GaussianMixture::standard_normal())
    }

    #[test]
    fn zero_shift_is_identity() {
        let p = perturb_model(normal(), 0.0).unwrap();
        let q = Query::at(&[0.3]);
        assert_eq!(p.conditional(&q).unwrap(), normal().conditional(&q).unwrap());
    }

    #[test]
    fn unit_shift_has_known_tv() {
        let p = perturb_model(normal(), 1.0).unwrap();
        let q = Query::at(&[0.0]);
        let a = normal().conditional(&q).unwrap();
        let b = p.conditional(&q).unwrap();
        // numeric TV: 0.5 ∫ |p - q|
        let h = 1e-3;
        let tv: f64 = (-12_000..13_000)
            .map(|i| (a.density1(i as f64 * h) - b.density1(i as f64 * h)).abs() * h)
            .sum::<f64>()
            * 0.5;
        assert!((tv - 0.3829).abs() < 1e-4);
        assert!((tv - tv_shifted_normals(1.0, 1.0)).abs() < 1e-6);
        assert_eq!(b.variances(), a.variances());
    }

    #[test]
    fn implicit_only_blocks_density() {
        let m = ImplicitOnly(normal());
        let q = Query::at(&[0.0]);
        assert!(matches!(m.conditional(&q), Err(Error::Capability(_))));
        assert_eq!(m.sample(&q, 3, &mut rng::stream(1, Domain::Test, 0)).unwrap().len(), 3);
        assert!(matches!(perturb_model(m, 1.0), Err(Error::Capability(_))));
    }
}
