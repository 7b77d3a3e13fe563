//! Calibration and prediction.
//!
//! Each calibration point `k` gets a family `R_{Z_k}(X_k; ·)`, a model-based
//! parameter `τ̄_k` and its observed score `λ̄_k`; the adjusted score
//! `V_k = f_{τ̄_k}^{-1}(λ̄_k)` feeds an order-statistic quantile `Q`. A test
//! point then receives `R_z(x; f_{τ_x}(Q))`.
//!
//! Random draws are keyed by `(seed, role, point index)`, so methods sharing
//! a seed see the same samples and results do not depend on thread count.

mod brent;
mod tau;
mod theory;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use brent::{brent_zero, first_nonnegative, RootOptions};
pub use tau::{compute_tau, solve_tau, tau_from_lambdas, TauMode};
pub use theory::{theory_bounds, TheoryBounds};

use crate::adjust::{AdjustmentFunction, AdjustmentKind};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::families::{ConfidenceFamily, ExogenousDraw, FamilyKind};
use crate::mixture::GaussianMixture;
use crate::models::{ConditionalModel, QuantileRegressor, Query, Role};
use crate::order::{ceil_snapped, sorted_quantile};
use crate::rng::{self, Domain};
use crate::set::PredictionSet;

/// Default number of conditional samples `M` per point.
pub const DEFAULT_SAMPLES: usize = 50;

/// τ used in place of a non-positive value for kinds that need τ > 0.
pub const TAU_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileMode {
    /// `k_α`-th smallest of `{V_k} ∪ {∞}`, `k_α = ⌈(1−α)(n+1)⌉`.
    MuWithInfinity,
    /// `(1−α)(1+1/n)`-quantile of the `n` finite scores.
    Cbar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MethodId {
    #[serde(rename = "CP")]
    Cp,
    #[serde(rename = "CQR")]
    Cqr,
    #[serde(rename = "PCP")]
    Pcp,
    #[serde(rename = "PiYX")]
    PiYx,
    #[serde(rename = "CP2-HPD")]
    Cp2Hpd,
    #[serde(rename = "CP2-PCP")]
    Cp2Pcp,
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodId::Cp => "CP",
            MethodId::Cqr => "CQR",
            MethodId::Pcp => "PCP",
            MethodId::PiYx => "PiYX",
            MethodId::Cp2Hpd => "CP2-HPD",
            MethodId::Cp2Pcp => "CP2-PCP",
        })
    }
}

/// A complete method: family, adjustment, quantile rule and τ evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub id: MethodId,
    pub family: FamilyKind,
    pub adjustment: AdjustmentFunction,
    pub alpha: f64,
    pub quantile_mode: QuantileMode,
    pub tau_mode: TauMode,
    /// Conditional samples `M` forming the ball-union centers.
    pub samples: usize,
}

impl MethodSpec {
    /// Display name; CP²-PCP carries its adjustment as a suffix.
    pub fn name(&self) -> String {
        match (self.id, self.adjustment.kind) {
            (MethodId::Cp2Pcp, AdjustmentKind::Linear) => "CP2-PCP-L".into(),
            (MethodId::Cp2Pcp, AdjustmentKind::Additive) => "CP2-PCP-D".into(),
            (MethodId::Cp2Pcp, k) => format!("CP2-PCP-{k}"),
            (id, _) => id.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("α must lie in (0, 1), got {}", self.alpha)));
        }
        if self.family == FamilyKind::BallUnion && self.samples == 0 {
            return Err(Error::Config("ball-union methods need at least one sample".into()));
        }
        if let TauMode::MonteCarlo { draws } = self.tau_mode {
            if draws == 0 && self.adjustment.depends_on_tau() {
                return Err(Error::Config("monte-carlo τ needs at least one draw".into()));
            }
        }
        if self.family == FamilyKind::HpdSuperlevel
            && !matches!(self.adjustment.kind, AdjustmentKind::Trivial | AdjustmentKind::Additive)
        {
            // superlevel parameters are negative, outside the τ > 0 range of
            // the multiplicative kinds
            return Err(Error::Config(format!(
                "the {} adjustment cannot be combined with density superlevel sets; use additive",
                self.adjustment.kind
            )));
        }
        if self.id == MethodId::PiYx
            && (self.adjustment.kind != AdjustmentKind::Additive || self.adjustment.phi != 0.0)
        {
            return Err(Error::Config("PiYX uses the additive adjustment with φ = 0".into()));
        }
        Ok(())
    }
}

/// Split conformal with `[pred(x) − t, pred(x) + t]`, `pred` the model mean.
pub fn make_cp(alpha: f64) -> MethodSpec {
    MethodSpec {
        id: MethodId::Cp,
        family: FamilyKind::FixedWidth,
        adjustment: AdjustmentFunction::trivial(),
        alpha,
        quantile_mode: QuantileMode::MuWithInfinity,
        tau_mode: TauMode::Analytic,
        samples: 0,
    }
}

/// Conformalized quantile regression.
pub fn make_cqr(alpha: f64) -> MethodSpec {
    MethodSpec {
        id: MethodId::Cqr,
        family: FamilyKind::CqrAdditive,
        adjustment: AdjustmentFunction::trivial(),
        alpha,
        quantile_mode: QuantileMode::Cbar,
        tau_mode: TauMode::Analytic,
        samples: 0,
    }
}

/// Probabilistic conformal prediction: balls around `m` conditional samples.
pub fn make_pcp(alpha: f64, m: usize) -> MethodSpec {
    MethodSpec {
        id: MethodId::Pcp,
        family: FamilyKind::BallUnion,
        adjustment: AdjustmentFunction::trivial(),
        alpha,
        quantile_mode: QuantileMode::MuWithInfinity,
        tau_mode: TauMode::MonteCarlo { draws: 5 * m },
        samples: m,
    }
}

/// The model alone: ball unions with the radius that holds `1 − α` of the
/// model's mass, no conformal correction.
pub fn make_pi_yx(alpha: f64, m: usize) -> MethodSpec {
    MethodSpec {
        id: MethodId::PiYx,
        adjustment: AdjustmentFunction::new(AdjustmentKind::Additive),
        ..make_cp2_pcp(PcpVariant::D, alpha, m)
    }
}

/// Density superlevel sets with the additive adjustment.
pub fn make_cp2_hpd(alpha: f64) -> MethodSpec {
    MethodSpec {
        id: MethodId::Cp2Hpd,
        family: FamilyKind::HpdSuperlevel,
        adjustment: AdjustmentFunction::new(AdjustmentKind::Additive),
        alpha,
        quantile_mode: QuantileMode::MuWithInfinity,
        tau_mode: TauMode::Analytic,
        samples: 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PcpVariant {
    /// `f_τ(λ) = τλ`.
    L,
    /// `f_τ(λ) = λ + τ`.
    D,
}

impl FromStr for PcpVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" | "l" => Ok(PcpVariant::L),
            "D" | "d" => Ok(PcpVariant::D),
            _ => Err(Error::Config(format!("unknown CP2-PCP variant `{s}`"))),
        }
    }
}

pub fn make_cp2_pcp(variant: PcpVariant, alpha: f64, m: usize) -> MethodSpec {
    let kind = match variant {
        PcpVariant::L => AdjustmentKind::Linear,
        PcpVariant::D => AdjustmentKind::Additive,
    };
    MethodSpec {
        id: MethodId::Cp2Pcp,
        family: FamilyKind::BallUnion,
        adjustment: AdjustmentFunction::new(kind),
        alpha,
        quantile_mode: QuantileMode::MuWithInfinity,
        tau_mode: TauMode::MonteCarlo { draws: 5 * m },
        samples: m,
    }
}

/// The fitted models a method may draw on.
#[derive(Clone, Copy, Default)]
pub struct BaseModels<'a> {
    pub conditional: Option<&'a dyn ConditionalModel>,
    pub quantiles: Option<&'a QuantileRegressor>,
}

impl<'a> BaseModels<'a> {
    pub fn conditional(model: &'a dyn ConditionalModel) -> Self {
        Self {
            conditional: Some(model),
            quantiles: None,
        }
    }

    fn model(&self) -> Result<&'a dyn ConditionalModel> {
        self.conditional
            .ok_or_else(|| Error::Config("method needs a conditional model".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub index: usize,
    pub tau: f64,
    pub lambda: f64,
    /// Adjusted score; `±∞` when `λ` lies outside the range of `f_τ`.
    pub v: f64,
}

#[derive(Debug, Clone)]
pub struct CalibratedMethod {
    spec: MethodSpec,
    seed: u64,
    records: Vec<CalibrationRecord>,
    quantile_v: f64,
    warnings: Vec<String>,
}

impl CalibratedMethod {
    pub fn spec(&self) -> &MethodSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn records(&self) -> &[CalibrationRecord] {
        &self.records
    }

    /// The calibrated quantile `Q`; `+∞` when too few points were available.
    pub fn quantile_v(&self) -> f64 {
        self.quantile_v
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// `k_α = ⌈(1−α)(n+1)⌉`.
pub fn k_alpha(n: usize, alpha: f64) -> usize {
    ceil_snapped((1.0 - alpha) * (n as f64 + 1.0)) as usize
}

/// Conformal quantile of the scores under `mode`.
pub fn conformal_quantile(scores: &[f64], alpha: f64, mode: QuantileMode) -> Result<f64> {
    let n = scores.len();
    if n == 0 {
        return Err(Error::Degenerate("no calibration scores".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("α must lie in (0, 1), got {alpha}")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    match mode {
        QuantileMode::MuWithInfinity => {
            let k = k_alpha(n, alpha).max(1);
            Ok(if k > n { f64::INFINITY } else { sorted[k - 1] })
        }
        QuantileMode::Cbar => {
            if alpha * (n as f64 + 1.0) < 1.0 - 1e-9 {
                return Err(Error::Config(format!(
                    "the cbar quantile needs α ≥ 1/(n+1) = {}, got {alpha}",
                    1.0 / (n as f64 + 1.0)
                )));
            }
            Ok(sorted_quantile(&sorted, (1.0 - alpha) * (1.0 + 1.0 / n as f64)))
        }
    }
}

struct PointState {
    family: ConfidenceFamily,
    tau: f64,
    clamped: Option<f64>,
}

fn prepare_point(spec: &MethodSpec, models: &BaseModels<'_>, q: &Query<'_>, seed: u64) -> Result<PointState> {
    let (draw_domain, tau_domain) = match q.role {
        Role::Calib => (Domain::Calib, Domain::CalibTau),
        _ => (Domain::Test, Domain::TestTau),
    };
    let idx = q.index as u64;
    let needs_tau = spec.adjustment.depends_on_tau();
    let needs_mixture = matches!(spec.family, FamilyKind::HpdSuperlevel | FamilyKind::FixedWidth)
        || (needs_tau && spec.tau_mode == TauMode::Analytic);
    let mixture: Option<GaussianMixture> = if needs_mixture {
        Some(models.model()?.conditional(q)?)
    } else {
        None
    };

    let family = match spec.family {
        FamilyKind::BallUnion => {
            let mut s = rng::stream(seed, draw_domain, idx);
            let centers = models.model()?.sample(q, spec.samples, &mut s)?;
            ConfidenceFamily::ball_union(ExogenousDraw::new(centers, rng::derive_seed(seed, draw_domain, idx))?)
        }
        FamilyKind::HpdSuperlevel => ConfidenceFamily::hpd(mixture.clone().expect("mixture loaded"))?,
        FamilyKind::FixedWidth => {
            let m = mixture.as_ref().expect("mixture loaded");
            if m.dim() != 1 {
                return Err(Error::Domain("fixed-width intervals need a scalar response".into()));
            }
            ConfidenceFamily::FixedWidth { pred: m.mean()[0] }
        }
        FamilyKind::CqrAdditive | FamilyKind::CqrMultiplicative => {
            let qr = models
                .quantiles
                .ok_or_else(|| Error::Config(format!("{} needs a quantile regressor", spec.name())))?;
            let lo = qr.predict_quantile(q.x, spec.alpha / 2.0)?;
            let hi = qr.predict_quantile(q.x, 1.0 - spec.alpha / 2.0)?;
            if spec.family == FamilyKind::CqrAdditive {
                ConfidenceFamily::CqrAdditive { lo, hi }
            } else {
                ConfidenceFamily::cqr_multiplicative(lo, hi)?
            }
        }
    };

    let draws = match spec.tau_mode {
        TauMode::MonteCarlo { draws } if needs_tau => {
            let mut s = rng::stream(seed, tau_domain, idx);
            Some(models.model()?.sample(q, draws, &mut s)?)
        }
        _ => None,
    };
    let mut tau = compute_tau(
        &family,
        &spec.adjustment,
        spec.alpha,
        spec.tau_mode,
        mixture.as_ref(),
        draws.as_deref(),
    )?;
    if !tau.is_finite() {
        return Err(Error::Numerical(format!("τ is not finite: {tau}")));
    }
    let mut clamped = None;
    if !spec.adjustment.is_admissible_tau(tau) {
        clamped = Some(tau);
        tau = TAU_CLAMP;
    }
    Ok(PointState { family, tau, clamped })
}

fn calibrate_point(
    spec: &MethodSpec,
    models: &BaseModels<'_>,
    x: &[f64],
    y: &[f64],
    k: usize,
    seed: u64,
) -> Result<(CalibrationRecord, Option<f64>)> {
    let st = prepare_point(spec, models, &Query::new(x, Role::Calib, k), seed)?;
    let lambda = st.family.lambda(y)?;
    let v = spec.adjustment.score(st.tau, lambda)?;
    Ok((CalibrationRecord { index: k, tau: st.tau, lambda, v }, st.clamped))
}

/// Runs the calibration pass over `calib`.
pub fn calibrate(calib: &Dataset, spec: &MethodSpec, models: &BaseModels<'_>, seed: u64) -> Result<CalibratedMethod> {
    spec.validate()?;
    if calib.is_empty() {
        return Err(Error::Degenerate("empty calibration set".into()));
    }
    let per_point = calib
        .samples()
        .par_iter()
        .enumerate()
        .map(|(k, s)| calibrate_point(spec, models, &s.x, &s.y, k, seed).map_err(|e| e.at_point(k)))
        .collect::<Result<Vec<_>>>()?;

    let mut warnings = Vec::new();
    let mut records = Vec::with_capacity(per_point.len());
    for (rec, clamped) in per_point {
        if let Some(t) = clamped {
            warnings.push(format!(
                "calibration point {}: τ = {t} is not admissible for the {} adjustment; clamped to {TAU_CLAMP}",
                rec.index, spec.adjustment.kind
            ));
        }
        records.push(rec);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let scores: Vec<f64> = records.iter().map(|r| r.v).collect();
    let quantile_v = conformal_quantile(&scores, spec.alpha, spec.quantile_mode)?;
    Ok(CalibratedMethod {
        spec: *spec,
        seed,
        records,
        quantile_v,
        warnings,
    })
}

/// Prediction set for the test point `x` with position `index` in the test
/// sample (which keys its random draws).
pub fn predict_set(cm: &CalibratedMethod, x: &[f64], index: usize, models: &BaseModels<'_>) -> Result<PredictionSet> {
    let spec = &cm.spec;
    let q = Query::new(x, Role::Test, index);
    let st = prepare_point(spec, models, &q, cm.seed)?;
    if let Some(t) = st.clamped {
        log::warn!(
            "test point {index}: τ = {t} is not admissible for the {} adjustment; clamped to {TAU_CLAMP}",
            spec.adjustment.kind
        );
    }
    let t = if spec.id == MethodId::PiYx {
        spec.adjustment.anchor_value(st.tau)?
    } else if cm.quantile_v == f64::INFINITY {
        f64::INFINITY
    } else {
        spec.adjustment.apply_extended(st.tau, cm.quantile_v)?
    };
    st.family.set(t)
}

/// Prediction sets for every row of `xs`, in order.
pub fn predict_sets(cm: &CalibratedMethod, xs: &[Vec<f64>], models: &BaseModels<'_>) -> Result<Vec<PredictionSet>> {
    xs.par_iter()
        .enumerate()
        .map(|(i, x)| predict_set(cm, x, i, models).map_err(|e| e.at_point(i)))
        .collect()
}
