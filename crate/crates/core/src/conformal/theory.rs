//! Finite-sample quantities behind the conditional-coverage bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryBounds {
    /// `Φ(ε) = ε[(1/u_ε + 1) log(1 + u_ε) − 1]`.
    pub phi: f64,
    /// `u_ε = ε / ((α + ε)(1 − α − ε))`.
    pub u_eps: f64,
    /// `ε_n = √(8α(1−α) log n / n)`.
    pub eps_n: f64,
    /// `exp(−n Φ(ε))`.
    pub bennett_term: f64,
}

/// `(1/u + 1) log(1 + u) − 1`, by its power series for small `u` where the
/// direct form cancels.
fn bennett_h_ratio(u: f64) -> f64 {
    if u < 1e-2 {
        // Σ_{k≥1} (−1)^{k+1} u^k / (k(k+1))
        let mut sum = 0.0;
        let mut pow = u;
        for k in 1..=14 {
            let kf = k as f64;
            let term = pow / (kf * (kf + 1.0));
            sum += if k % 2 == 1 { term } else { -term };
            pow *= u;
        }
        sum
    } else {
        (1.0 / u + 1.0) * u.ln_1p() - 1.0
    }
}

pub fn theory_bounds(alpha: f64, n: u64, epsilon: f64) -> Result<TheoryBounds> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("α must lie in (0, 1), got {alpha}")));
    }
    if !(epsilon >= 0.0 && epsilon < 1.0 - alpha) {
        return Err(Error::Domain(format!("ε must lie in [0, 1 − α), got {epsilon}")));
    }
    if n < 1 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let nf = n as f64;
    let u_eps = epsilon / ((alpha + epsilon) * (1.0 - alpha - epsilon));
    let phi = if epsilon == 0.0 { 0.0 } else { epsilon * bennett_h_ratio(u_eps) };
    let eps_n = (8.0 * alpha * (1.0 - alpha) * nf.ln() / nf).sqrt();
    Ok(TheoryBounds {
        phi,
        u_eps,
        eps_n,
        bennett_term: (-nf * phi).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_epsilon() {
        let b = theory_bounds(0.1, 1000, 0.0).unwrap();
        assert_eq!((b.u_eps, b.phi, b.bennett_term), (0.0, 0.0, 1.0));
    }

    #[test]
    fn series_matches_direct_form_at_the_switch() {
        let u: f64 = 1e-2;
        let direct = (1.0 / u + 1.0) * u.ln_1p() - 1.0;
        assert!((bennett_h_ratio(u * (1.0 - 1e-12)) - direct).abs() < 1e-14);
    }

    #[test]
    fn domain() {
        assert!(theory_bounds(0.0, 10, 0.1).is_err());
        assert!(theory_bounds(0.1, 10, 0.9).is_err());
        assert!(theory_bounds(0.1, 10, -0.1).is_err());
    }
}
