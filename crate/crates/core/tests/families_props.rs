use cp2_core::families::{hpd_superlevel_intervals, ConfidenceFamily, ExogenousDraw};
use cp2_core::rng::{stream, Domain};
use cp2_core::GaussianMixture;
use proptest::prelude::*;

fn mixture_strategy(max_k: usize) -> impl Strategy<Value = GaussianMixture> {
    prop::collection::vec((0.05f64..1.0, -5.0f64..5.0, 0.2f64..2.0), 1..=max_k).prop_map(|c| {
        let s: f64 = c.iter().map(|t| t.0).sum();
        let w: Vec<f64> = c.iter().map(|t| t.0 / s).collect();
        let m: Vec<f64> = c.iter().map(|t| t.1).collect();
        let sd: Vec<f64> = c.iter().map(|t| t.2).collect();
        GaussianMixture::univariate(&w, &m, &sd).unwrap()
    })
}

fn family_strategy() -> impl Strategy<Value = ConfidenceFamily> {
    prop_oneof![
        prop::collection::vec(-4.0f64..4.0, 1..8)
            .prop_map(|c| ConfidenceFamily::ball_union(ExogenousDraw::new(c.into_iter().map(|v| vec![v]).collect(), 0).unwrap())),
        mixture_strategy(4).prop_map(|m| ConfidenceFamily::hpd(m).unwrap()),
        (-3.0f64..3.0).prop_map(|pred| ConfidenceFamily::FixedWidth { pred }),
        (-3.0f64..0.0, 0.0f64..3.0).prop_map(|(lo, hi)| ConfidenceFamily::CqrAdditive { lo, hi }),
        (-3.0f64..0.0, 0.01f64..3.0).prop_map(|(lo, hi)| ConfidenceFamily::cqr_multiplicative(lo, hi).unwrap()),
    ]
}

/// Map a unit-interval draw onto the family's natural parameter range.
fn param(fam: &ConfidenceFamily, u: f64) -> f64 {
    match fam {
        ConfidenceFamily::HpdSuperlevel(p) => -p.peak_density() * (1.0 - u),
        _ => -1.0 + 6.0 * u,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn sets_are_nested(fam in family_strategy(), u1 in 0.0f64..1.0, u2 in 0.0f64..1.0) {
        let (t1, t2) = (param(&fam, u1.min(u2)), param(&fam, u1.max(u2)));
        let (a, b) = (fam.set(t1).unwrap(), fam.set(t2).unwrap());
        prop_assert!(a.is_subset_of(&b), "R({}) = {:?} ⊄ R({}) = {:?}", t1, a, t2, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn lambda_is_the_first_covering_parameter(fam in family_strategy(), y in -7.0f64..7.0) {
        let l = fam.lambda(&[y]).unwrap();
        prop_assert!(fam.set(l).unwrap().contains_scalar(y), "y = {} not in R(λ = {})", y, l);
        prop_assert!(!fam.set(l - 1e-6).unwrap().contains_scalar(y), "y = {} already in R(λ − 1e-6)", y);
    }

    #[test]
    fn lambda_matches_bisection_on_membership(fam in family_strategy(), y in -7.0f64..7.0) {
        let inside = |t: f64| fam.set(t).unwrap().contains_scalar(y);
        let (mut lo, mut hi) = match &fam {
            ConfidenceFamily::HpdSuperlevel(p) => (-2.0 * p.peak_density() - 1.0, 0.0),
            _ => (-10.0, 10.0),
        };
        prop_assume!(!inside(lo) && inside(hi));
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if inside(mid) { hi = mid } else { lo = mid }
        }
        let l = fam.lambda(&[y]).unwrap();
        prop_assert!((l - hi).abs() < 1e-8, "closed form {} vs bisection {}", l, hi);
    }

    #[test]
    fn mass_is_monotone(fam in family_strategy(), m in mixture_strategy(3), u1 in 0.0f64..1.0, u2 in 0.0f64..1.0) {
        let (t1, t2) = (param(&fam, u1.min(u2)), param(&fam, u1.max(u2)));
        prop_assert!(fam.mass(t1, &m).unwrap() <= fam.mass(t2, &m).unwrap() + 1e-12);
    }

    #[test]
    fn sets_exhaust_the_line(fam in family_strategy(), y in -7.0f64..7.0) {
        prop_assert!(fam.set(f64::INFINITY).unwrap().contains_scalar(y));
        let low = match &fam {
            ConfidenceFamily::HpdSuperlevel(p) => -2.0 * p.peak_density() - 1.0,
            _ => -1e3,
        };
        prop_assert!(!fam.set(low).unwrap().contains_scalar(y));
    }

    #[test]
    fn hpd_mass_and_complement_sum_to_one(m in mixture_strategy(10), u in 0.01f64..0.99) {
        let fam = ConfidenceFamily::hpd(m.clone()).unwrap();
        let c = fam_peak(&fam) * u;
        let iv = hpd_superlevel_intervals(&m, c).unwrap();
        let inside: f64 = iv.iter().map(|i| m.interval_mass(i.lo, i.hi)).sum();
        let mut edges = vec![f64::NEG_INFINITY];
        for i in &iv {
            edges.push(i.lo);
            edges.push(i.hi);
        }
        edges.push(f64::INFINITY);
        let outside: f64 = edges.chunks(2).map(|g| m.interval_mass(g[0], g[1])).sum();
        prop_assert!((inside + outside - 1.0).abs() < 1e-6);
    }
}

fn fam_peak(fam: &ConfidenceFamily) -> f64 {
    match fam {
        ConfidenceFamily::HpdSuperlevel(p) => p.peak_density(),
        _ => unreachable!(),
    }
}

#[test]
fn monte_carlo_mass_tracks_analytic_mass() {
    let n_draws = 10_000;
    let tol = 3.0 * (0.25f64 / n_draws as f64).sqrt();
    let m = GaussianMixture::univariate(&[0.3, 0.7], &[-1.0, 2.0], &[0.5, 1.0]).unwrap();
    let draws = m.sample(n_draws, &mut stream(0, Domain::Custom(8), 0));
    let fams = [
        ConfidenceFamily::ball_union(ExogenousDraw::new(vec![vec![-1.0], vec![2.5]], 0).unwrap()),
        ConfidenceFamily::hpd(m.clone()).unwrap(),
        ConfidenceFamily::FixedWidth { pred: 0.5 },
        ConfidenceFamily::CqrAdditive { lo: -1.0, hi: 1.5 },
    ];
    for fam in &fams {
        let t = match fam {
            ConfidenceFamily::HpdSuperlevel(_) => -0.1,
            _ => 0.8,
        };
        let a = fam.mass(t, &m).unwrap();
        let e = fam.empirical_mass(t, &draws).unwrap();
        assert!((a - e).abs() < tol, "{:?}: analytic {a} vs empirical {e}", fam.kind());
    }
}

#[test]
fn empirical_mass_has_binomial_mean_and_variance() {
    let m = GaussianMixture::univariate(&[0.3, 0.7], &[-0.7, 2.0], &[0.5, 1.0]).unwrap();
    let fam = ConfidenceFamily::CqrAdditive { lo: -1.0, hi: 1.5 };
    let p = fam.mass(0.8, &m).unwrap();
    let (reps, n) = (2000u64, 2000usize);
    let v: Vec<f64> = (0..reps)
        .map(|i| fam.empirical_mass(0.8, &m.sample(n, &mut stream(i, Domain::Custom(9), 0))).unwrap())
        .collect();
    let mean = v.iter().sum::<f64>() / reps as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let binom = p * (1.0 - p) / n as f64;
    assert!((mean - p).abs() < 4.0 * (binom / reps as f64).sqrt(), "mean {mean} vs {p}");
    // the variance ratio of 2000 replicates has standard error about 0.032
    assert!((var / binom - 1.0).abs() < 0.1, "variance ratio {}", var / binom);
}

#[test]
fn whole_space_parameter_has_full_mass() {
    let m = GaussianMixture::standard_normal();
    let fam = ConfidenceFamily::FixedWidth { pred: 0.0 };
    assert_eq!(fam.mass(f64::INFINITY, &m).unwrap(), 1.0);
    let half = fam.mass(1.959964, &m).unwrap();
    assert!((half - 0.95).abs() < 1e-6);
}
