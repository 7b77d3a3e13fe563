//! Adjustment functions `f_τ(λ)` that blend the conformal quantile with the
//! model-derived parameter τ.
//!
//! Two maps matter for every kind:
//!
//! * `λ ↦ f_τ(λ)` must be strictly increasing for the calibrated τ
//!   ([`AdjustmentFunction::is_admissible_tau`]);
//! * `τ ↦ f_τ(φ)` must be an increasing bijection onto the family's
//!   parameter range, so the model radius can be expressed as a τ
//!   ([`AdjustmentFunction::anchor_value`] and its inverse
//!   [`AdjustmentFunction::tau_for_anchor_value`]).

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjustmentKind {
    /// `f_τ(λ) = λ`: plain conformal prediction, τ is ignored.
    Trivial,
    /// `f_τ(λ) = τλ`
    Linear,
    /// `f_τ(λ) = λ + τ`
    Additive,
    /// `f_τ(λ) = exp(τλ)`
    Exp,
    /// `f_τ(λ) = tan(τλ)`
    Tan,
    /// `f_τ(λ) = 1 / (1 + exp(-λτ))`
    Sigmoid,
}

impl AdjustmentKind {
    pub const ALL: [AdjustmentKind; 6] = [
        AdjustmentKind::Trivial,
        AdjustmentKind::Linear,
        AdjustmentKind::Additive,
        AdjustmentKind::Exp,
        AdjustmentKind::Tan,
        AdjustmentKind::Sigmoid,
    ];

    /// Default anchor φ.
    pub fn default_anchor(self) -> f64 {
        match self {
            AdjustmentKind::Additive => 0.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for AdjustmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AdjustmentKind::Trivial => "trivial",
            AdjustmentKind::Linear => "linear",
            AdjustmentKind::Additive => "additive",
            AdjustmentKind::Exp => "exp",
            AdjustmentKind::Tan => "tan",
            AdjustmentKind::Sigmoid => "sigmoid",
        };
        f.write_str(s)
    }
}

impl FromStr for AdjustmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "trivial" => Ok(AdjustmentKind::Trivial),
            "linear" => Ok(AdjustmentKind::Linear),
            "additive" => Ok(AdjustmentKind::Additive),
            "exp" => Ok(AdjustmentKind::Exp),
            "tan" => Ok(AdjustmentKind::Tan),
            "sigmoid" => Ok(AdjustmentKind::Sigmoid),
            other => Err(Error::Config(format!("unknown adjustment `{other}`"))),
        }
    }
}

/// An adjustment kind together with its anchor φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentFunction {
    pub kind: AdjustmentKind,
    pub phi: f64,
}

impl AdjustmentFunction {
    /// Adjustment with the default anchor for `kind`.
    pub fn new(kind: AdjustmentKind) -> Self {
        Self {
            kind,
            phi: kind.default_anchor(),
        }
    }

    /// Adjustment with an explicit anchor. Multiplicative kinds need φ > 0
    /// for `τ ↦ f_τ(φ)` to be increasing.
    pub fn with_anchor(kind: AdjustmentKind, phi: f64) -> Result<Self> {
        if !phi.is_finite() {
            return Err(Error::Domain(format!("anchor must be finite, got {phi}")));
        }
        match kind {
            AdjustmentKind::Linear | AdjustmentKind::Exp | AdjustmentKind::Tan | AdjustmentKind::Sigmoid
                if phi <= 0.0 =>
            {
                Err(Error::Domain(format!("{kind} adjustment needs a positive anchor, got {phi}")))
            }
            _ => Ok(Self { kind, phi }),
        }
    }

    pub fn trivial() -> Self {
        Self::new(AdjustmentKind::Trivial)
    }

    /// Whether τ influences the adjusted score at all.
    pub fn depends_on_tau(&self) -> bool {
        self.kind != AdjustmentKind::Trivial
    }

    /// `λ ↦ f_τ(λ)` is strictly increasing for this τ.
    pub fn is_admissible_tau(&self, tau: f64) -> bool {
        if !tau.is_finite() {
            return false;
        }
        match self.kind {
            AdjustmentKind::Trivial | AdjustmentKind::Additive => true,
            AdjustmentKind::Linear | AdjustmentKind::Exp | AdjustmentKind::Tan | AdjustmentKind::Sigmoid => {
                tau > 0.0
            }
        }
    }

    fn check_tau(&self, tau: f64) -> Result<()> {
        if self.is_admissible_tau(tau) {
            Ok(())
        } else {
            Err(Error::Domain(format!("τ = {tau} is not admissible for the {} adjustment", self.kind)))
        }
    }

    /// `f_τ(λ)`.
    pub fn apply(&self, tau: f64, lambda: f64) -> Result<f64> {
        self.check_tau(tau)?;
        if lambda.is_nan() {
            return Err(Error::Domain("λ is NaN".into()));
        }
        let v = match self.kind {
            AdjustmentKind::Trivial => lambda,
            AdjustmentKind::Linear => tau * lambda,
            AdjustmentKind::Additive => lambda + tau,
            AdjustmentKind::Exp => (tau * lambda).exp(),
            AdjustmentKind::Tan => {
                let z = tau * lambda;
                if z.abs() >= FRAC_PI_2 {
                    return Err(Error::Domain(format!("tan adjustment needs |τλ| < π/2, got {z}")));
                }
                z.tan()
            }
            AdjustmentKind::Sigmoid => 1.0 / (1.0 + (-lambda * tau).exp()),
        };
        Ok(v)
    }

    /// `f_τ^{-1}(v)`.
    pub fn invert(&self, tau: f64, v: f64) -> Result<f64> {
        self.check_tau(tau)?;
        if v.is_nan() {
            return Err(Error::Domain("value is NaN".into()));
        }
        let lambda = match self.kind {
            AdjustmentKind::Trivial => v,
            AdjustmentKind::Linear => v / tau,
            AdjustmentKind::Additive => v - tau,
            AdjustmentKind::Exp => {
                if v <= 0.0 {
                    return Err(Error::Domain(format!("exp adjustment inverse needs v > 0, got {v}")));
                }
                v.ln() / tau
            }
            AdjustmentKind::Tan => v.atan() / tau,
            AdjustmentKind::Sigmoid => {
                if !(v > 0.0 && v < 1.0) {
                    return Err(Error::Domain(format!(
                        "sigmoid adjustment inverse needs v in (0, 1), got {v}"
                    )));
                }
                (v / (1.0 - v)).ln() / tau
            }
        };
        Ok(lambda)
    }

    /// Adjusted score `inf{v : λ ≤ f_τ(v)}`. Equals [`Self::invert`] on the
    /// range of `f_τ`; below the range it is `−∞` and above it `+∞`.
    pub fn score(&self, tau: f64, lambda: f64) -> Result<f64> {
        self.check_tau(tau)?;
        match self.kind {
            AdjustmentKind::Exp if lambda <= 0.0 => Ok(f64::NEG_INFINITY),
            AdjustmentKind::Sigmoid if lambda <= 0.0 => Ok(f64::NEG_INFINITY),
            AdjustmentKind::Sigmoid if lambda >= 1.0 => Ok(f64::INFINITY),
            _ => self.invert(tau, lambda),
        }
    }

    /// `f_τ(v)` extended to `v = ±∞` and, for Tan, to `|τv| ≥ π/2`, by the
    /// limits of the increasing map.
    pub fn apply_extended(&self, tau: f64, v: f64) -> Result<f64> {
        self.check_tau(tau)?;
        if v == f64::INFINITY {
            return Ok(match self.kind {
                AdjustmentKind::Sigmoid => 1.0,
                _ => f64::INFINITY,
            });
        }
        if v == f64::NEG_INFINITY {
            return Ok(match self.kind {
                AdjustmentKind::Exp | AdjustmentKind::Sigmoid => 0.0,
                _ => f64::NEG_INFINITY,
            });
        }
        if self.kind == AdjustmentKind::Tan && (tau * v).abs() >= FRAC_PI_2 {
            return Ok(f64::INFINITY.copysign(v));
        }
        self.apply(tau, v)
    }

    /// Open interval of τ on which `τ ↦ f_τ(φ)` is a bijection.
    pub fn tau_domain(&self) -> (f64, f64) {
        match self.kind {
            AdjustmentKind::Tan => {
                let b = FRAC_PI_2 / self.phi.abs();
                (-b, b)
            }
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `f_τ(φ)`, defined for every τ in [`Self::tau_domain`]; no λ-monotonicity
    /// requirement on τ here.
    pub fn anchor_value(&self, tau: f64) -> Result<f64> {
        let phi = self.phi;
        let v = match self.kind {
            AdjustmentKind::Trivial => phi,
            AdjustmentKind::Linear => tau * phi,
            AdjustmentKind::Additive => phi + tau,
            AdjustmentKind::Exp => (tau * phi).exp(),
            AdjustmentKind::Tan => {
                let z = tau * phi;
                if z.abs() >= FRAC_PI_2 {
                    return Err(Error::Domain(format!("tan anchor needs |τφ| < π/2, got {z}")));
                }
                z.tan()
            }
            AdjustmentKind::Sigmoid => 1.0 / (1.0 + (-phi * tau).exp()),
        };
        Ok(v)
    }

    /// Inverse of `τ ↦ f_τ(φ)`: the τ whose anchor value is `t`.
    pub fn tau_for_anchor_value(&self, t: f64) -> Result<f64> {
        let phi = self.phi;
        match self.kind {
            AdjustmentKind::Trivial => Err(Error::Domain(
                "trivial adjustment: τ ↦ f_τ(φ) is constant and has no inverse".into(),
            )),
            AdjustmentKind::Linear => Ok(t / phi),
            AdjustmentKind::Additive => Ok(t - phi),
            AdjustmentKind::Exp => {
                if t <= 0.0 {
                    Err(Error::Domain(format!("exp anchor value must be positive, got {t}")))
                } else {
                    Ok(t.ln() / phi)
                }
            }
            AdjustmentKind::Tan => Ok(t.atan() / phi),
            AdjustmentKind::Sigmoid => {
                if t > 0.0 && t < 1.0 {
                    Ok((t / (1.0 - t)).ln() / phi)
                } else {
                    Err(Error::Domain(format!("sigmoid anchor value must lie in (0, 1), got {t}")))
                }
            }
        }
    }
}

impl Default for AdjustmentFunction {
    fn default() -> Self {
        Self::trivial()
    }
}
