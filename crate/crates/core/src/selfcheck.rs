//! Fast randomized invariant checks, run by `cp2 check`.

use rand::Rng;
use serde::Serialize;

use crate::adjust::{AdjustmentFunction, AdjustmentKind};
use crate::conformal::{conformal_quantile, solve_tau, tau_from_lambdas, theory_bounds, QuantileMode};
use crate::families::{hpd_superlevel_intervals, ConfidenceFamily, ExogenousDraw};
use crate::mixture::GaussianMixture;
use crate::rng::{self, Domain, Stream};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, failures: Vec<String>, cases: usize) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: failures.is_empty(),
        detail: match failures.first() {
            None => format!("{cases} cases"),
            Some(f) => format!("{} of {cases} cases failed, first: {f}", failures.len()),
        },
    }
}

fn random_admissible(r: &mut Stream) -> (AdjustmentFunction, f64) {
    let kind = AdjustmentKind::ALL[r.random_range(0..AdjustmentKind::ALL.len())];
    let adj = AdjustmentFunction::new(kind);
    let tau = match kind {
        AdjustmentKind::Additive | AdjustmentKind::Trivial => r.random_range(-3.0..3.0),
        AdjustmentKind::Tan => r.random_range(0.05..1.0),
        _ => r.random_range(0.05..3.0),
    };
    (adj, tau)
}

fn random_mixture(r: &mut Stream, k: usize) -> GaussianMixture {
    let w: Vec<f64> = (0..k).map(|_| r.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|v| v / total).collect();
    let m: Vec<f64> = (0..k).map(|_| r.random_range(-5.0..5.0)).collect();
    let s: Vec<f64> = (0..k).map(|_| r.random_range(0.2..2.0)).collect();
    GaussianMixture::univariate(&w, &m, &s).expect("valid random mixture")
}

fn adjustment_round_trip(r: &mut Stream) -> CheckOutcome {
    let mut fails = Vec::new();
    let cases = 2000;
    for _ in 0..cases {
        let (adj, tau) = random_admissible(r);
        let lambda = match adj.kind {
            AdjustmentKind::Sigmoid => r.random_range(0.05..0.95),
            AdjustmentKind::Tan => r.random_range(-1.0..1.0),
            AdjustmentKind::Exp => r.random_range(0.05..20.0),
            _ => r.random_range(-20.0..20.0),
        };
        let back = adj.apply(tau, lambda).and_then(|v| adj.invert(tau, v));
        match back {
            Ok(b) if (b - lambda).abs() < 1e-10 => {}
            other => fails.push(format!("{} τ={tau} λ={lambda}: {other:?}", adj.kind)),
        }
    }
    outcome("adjustment round trip", fails, cases)
}

fn family_nesting(r: &mut Stream) -> CheckOutcome {
    let mut fails = Vec::new();
    let cases = 300;
    for i in 0..cases {
        let fam = match i % 3 {
            0 => {
                let m = r.random_range(1..6);
                let centers = (0..m).map(|_| vec![r.random_range(-4.0..4.0)]).collect();
                ConfidenceFamily::ball_union(ExogenousDraw::new(centers, i as u64).expect("non-empty draw"))
            }
            1 => ConfidenceFamily::hpd(random_mixture(r, 3)).expect("scalar mixture"),
            _ => ConfidenceFamily::cqr_multiplicative(-1.0, r.random_range(-0.5..2.0)).expect("lo < hi"),
        };
        let (a, b): (f64, f64) = match fam {
            ConfidenceFamily::HpdSuperlevel(_) => (r.random_range(-0.3..0.0), r.random_range(-0.3..0.0)),
            _ => (r.random_range(0.0..3.0), r.random_range(0.0..3.0)),
        };
        let (t1, t2) = (a.min(b), a.max(b));
        let (s1, s2) = match (fam.set(t1), fam.set(t2)) {
            (Ok(s1), Ok(s2)) => (s1, s2),
            (e1, e2) => {
                fails.push(format!("{:?} set error: {e1:?} {e2:?}", fam.kind()));
                continue;
            }
        };
        if !s1.is_subset_of(&s2) {
            fails.push(format!("{:?}: R({t1}) ⊄ R({t2})", fam.kind()));
        }
        // λ(y) is the smallest t whose set holds y
        let y = r.random_range(-8.0..8.0);
        if let Ok(l) = fam.lambda(&[y]) {
            let inside = fam.set(l).map(|s| s.contains_scalar(y)).unwrap_or(false);
            if !inside {
                fails.push(format!("{:?}: y={y} not in R(λ(y)={l})", fam.kind()));
            }
        }
    }
    outcome("family nesting and λ consistency", fails, cases)
}

fn hpd_standard_normal() -> CheckOutcome {
    let m = GaussianMixture::standard_normal();
    let got = hpd_superlevel_intervals(&m, m.density1(1.0));
    let ok = matches!(&got, Ok(v) if v.len() == 1 && (v[0].lo + 1.0).abs() < 1e-8 && (v[0].hi - 1.0).abs() < 1e-8);
    CheckOutcome {
        name: "HPD set of N(0, 1) at density(1)",
        passed: ok,
        detail: format!("{got:?}"),
    }
}

fn hpd_mass_complement(r: &mut Stream) -> CheckOutcome {
    let mut fails = Vec::new();
    let cases = 50;
    for _ in 0..cases {
        let m = random_mixture(r, 10);
        let (lo, hi) = m.support_bracket1();
        let peak = (0..2001)
            .map(|i| m.density1(lo + (hi - lo) * i as f64 / 2000.0))
            .fold(0.0, f64::max);
        let c = peak * r.random_range(0.05..0.95);
        match hpd_superlevel_intervals(&m, c) {
            Ok(iv) => {
                let inside: f64 = iv.iter().map(|i| m.interval_mass(i.lo, i.hi)).sum();
                let mut outside = m.cdf1(iv.first().map_or(f64::INFINITY, |i| i.lo));
                for w in iv.windows(2) {
                    outside += m.interval_mass(w[0].hi, w[1].lo);
                }
                outside += 1.0 - m.cdf1(iv.last().map_or(f64::INFINITY, |i| i.hi));
                if (inside + outside - 1.0).abs() > 1e-6 {
                    fails.push(format!("mass {inside} + {outside}"));
                }
            }
            Err(e) => fails.push(e.to_string()),
        }
    }
    outcome("HPD mass plus complement", fails, cases)
}

fn quantile_modes_agree(r: &mut Stream) -> CheckOutcome {
    let mut fails = Vec::new();
    let cases = 200;
    for _ in 0..cases {
        let n = r.random_range(1..300);
        let alpha = r.random_range(1.0 / (n as f64 + 1.0)..0.6);
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..5.0)).collect();
        let a = conformal_quantile(&scores, alpha, QuantileMode::MuWithInfinity);
        let b = conformal_quantile(&scores, alpha, QuantileMode::Cbar);
        match (a, b) {
            (Ok(a), Ok(b)) if a == b => {}
            (a, b) => fails.push(format!("n={n} α={alpha}: {a:?} vs {b:?}")),
        }
    }
    outcome("μ and cbar quantiles agree", fails, cases)
}

fn closed_form_tau(r: &mut Stream) -> CheckOutcome {
    let mut fails = Vec::new();
    let cases = 100;
    for i in 0..cases {
        let m = r.random_range(1..10);
        let centers: Vec<Vec<f64>> = (0..m).map(|_| vec![r.random_range(-3.0..3.0)]).collect();
        let fam = ConfidenceFamily::ball_union(ExogenousDraw::new(centers, i as u64).expect("non-empty draw"));
        let draws: Vec<Vec<f64>> = (0..r.random_range(5..60)).map(|_| vec![r.random_range(-4.0..4.0)]).collect();
        let adj = AdjustmentFunction::new(AdjustmentKind::Linear);
        let alpha = r.random_range(0.05..0.5);
        let lambdas: Vec<f64> = draws.iter().map(|d| fam.lambda(d).expect("finite draw")).collect();
        let closed = tau_from_lambdas(&adj, alpha, &lambdas);
        let brent = solve_tau(&adj, alpha, |t| fam.empirical_mass(t, &draws));
        match (closed, brent) {
            (Ok(a), Ok(b)) if (a - b).abs() < 1e-8 => {}
            (a, b) => fails.push(format!("{a:?} vs {b:?}")),
        }
    }
    outcome("closed-form τ matches Brent", fails, cases)
}

fn bennett_bound() -> CheckOutcome {
    let alpha = 0.1;
    let mut fails = Vec::new();
    for n in [1_000u64, 10_000, 100_000, 1_000_000] {
        match theory_bounds(alpha, n, 0.0).and_then(|b| theory_bounds(alpha, n, b.eps_n)) {
            Ok(b) => {
                let applies = b.eps_n <= alpha * (1.0 - alpha) / 8.0;
                if applies && b.bennett_term > 1.0 / n as f64 {
                    fails.push(format!("n={n}: exp(−nΦ) = {}", b.bennett_term));
                }
            }
            Err(e) => fails.push(e.to_string()),
        }
    }
    outcome("Bennett term below 1/n", fails, 4)
}

/// Runs every check with streams derived from `seed`.
pub fn run_selfcheck(seed: u64) -> Vec<CheckOutcome> {
    let r = |i| rng::stream(seed, Domain::Custom(0xc4ec), i);
    vec![
        adjustment_round_trip(&mut r(0)),
        family_nesting(&mut r(1)),
        hpd_standard_normal(),
        hpd_mass_complement(&mut r(2)),
        quantile_modes_agree(&mut r(3)),
        closed_form_tau(&mut r(4)),
        bennett_bound(),
    ]
}
