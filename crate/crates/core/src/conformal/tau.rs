//! The per-point parameter `τ_{x,z} = inf{τ : Π(R_z(x; f_τ(φ))) ≥ 1 − α}`.

use serde::{Deserialize, Serialize};

use super::brent::{first_nonnegative, RootOptions};
use crate::adjust::AdjustmentFunction;
use crate::error::{Error, Result};
use crate::families::ConfidenceFamily;
use crate::mixture::GaussianMixture;
use crate::order::sorted_quantile;

/// How the mass `Π(R(x; t))` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum TauMode {
    /// Exact mass under the conditional mixture, root found by Brent.
    Analytic,
    /// Empirical mass of `draws` fresh samples, solved in closed form.
    MonteCarlo { draws: usize },
}

/// τ solving `mass(f_τ(φ)) ≥ 1 − α` by Brent's method, for any
/// non-decreasing mass function of the family parameter.
pub fn solve_tau<F>(adj: &AdjustmentFunction, alpha: f64, mut mass: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    check_alpha(alpha)?;
    let target = 1.0 - alpha;
    first_nonnegative(
        |tau| Ok(mass(adj.anchor_value(tau)?)? - target),
        adj.tau_domain(),
        RootOptions::default(),
    )
}

/// Closed form of τ for an empirical mass: with `λ_j` the scores of the
/// fresh draws, the mass at `t` is `#{λ_j ≤ t}/Ñ`, so τ inverts the anchor
/// map at the empirical `(1 − α)`-quantile of the `λ_j`.
pub fn tau_from_lambdas(adj: &AdjustmentFunction, alpha: f64, lambdas: &[f64]) -> Result<f64> {
    check_alpha(alpha)?;
    if lambdas.is_empty() {
        return Err(Error::Domain("closed-form τ needs at least one draw".into()));
    }
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let t = sorted_quantile(&sorted, 1.0 - alpha);
    adj.tau_for_anchor_value(t).map_err(|e| {
        Error::Bracket(format!("anchor value {t} is outside the range of τ ↦ f_τ(φ): {e}"))
    })
}

/// τ for one point. `mixture` is required in analytic mode and `draws` in
/// monte-carlo mode.
pub fn compute_tau(
    fam: &ConfidenceFamily,
    adj: &AdjustmentFunction,
    alpha: f64,
    mode: TauMode,
    mixture: Option<&GaussianMixture>,
    draws: Option<&[Vec<f64>]>,
) -> Result<f64> {
    if !adj.depends_on_tau() {
        return Ok(0.0);
    }
    match mode {
        TauMode::Analytic => {
            let m = mixture.ok_or_else(|| Error::Capability("analytic τ needs an explicit model".into()))?;
            solve_tau(adj, alpha, |t| fam.mass(t, m))
        }
        TauMode::MonteCarlo { .. } => {
            let d = draws.ok_or_else(|| Error::Capability("monte-carlo τ needs a sampler".into()))?;
            let lambdas = d.iter().map(|y| fam.lambda(y)).collect::<Result<Vec<_>>>()?;
            tau_from_lambdas(adj, alpha, &lambdas)
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("α must lie in (0, 1), got {alpha}")))
    }
}
