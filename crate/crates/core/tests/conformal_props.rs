use cp2_core::conformal::{
    calibrate, make_cp, make_cp2_hpd, make_cp2_pcp, make_cqr, make_pcp, make_pi_yx, predict_set, predict_sets,
    BaseModels, MethodSpec, PcpVariant, QuantileMode, TauMode,
};
use cp2_core::data::{dgp_sample, oracle_model, OracleModel, SyntheticDgp};
use cp2_core::families::FamilyKind;
use cp2_core::mixture::tv_shifted_normals;
use cp2_core::models::{perturb_model, Capabilities, ConditionalModel, QuantileRegressor, Query};
use cp2_core::rng::{stream, Domain, Stream};
use cp2_core::{AdjustmentFunction, AdjustmentKind, Dataset, GaussianMixture, PredictionSet, Result};
use proptest::prelude::*;

const Z95: f64 = 1.6448536269514722;

fn hetero() -> SyntheticDgp {
    "hetero1d".parse().unwrap()
}

fn sample(n: usize, seed: u64, part: u64) -> Dataset {
    dgp_sample(&hetero(), n, &mut stream(seed, Domain::Data, part)).unwrap()
}

/// True conditional quantiles of `y = (1 + x)·ε`.
fn oracle_quantiles(alpha: f64) -> QuantileRegressor {
    let z = |level: f64| {
        let m = GaussianMixture::standard_normal();
        m.quantile1(level).unwrap()
    };
    let (zl, zh) = (z(alpha / 2.0), z(1.0 - alpha / 2.0));
    QuantileRegressor::from_fn(&[alpha / 2.0, 1.0 - alpha / 2.0], move |x, level| {
        (1.0 + x[0]) * if level < 0.5 { zl } else { zh }
    })
    .unwrap()
}

fn bounds(s: &PredictionSet) -> Vec<(f64, f64)> {
    match s {
        PredictionSet::Intervals { intervals } => intervals.intervals().iter().map(|i| (i.lo, i.hi)).collect(),
        PredictionSet::Unbounded { .. } => vec![(f64::NEG_INFINITY, f64::INFINITY)],
        PredictionSet::Balls(_) => unreachable!("scalar responses"),
    }
}

fn all_methods(alpha: f64) -> Vec<MethodSpec> {
    vec![
        make_cp(alpha),
        make_cqr(alpha),
        make_pcp(alpha, 10),
        make_cp2_hpd(alpha),
        make_cp2_pcp(PcpVariant::L, alpha, 10),
        make_cp2_pcp(PcpVariant::D, alpha, 10),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quantile_modes_give_identical_sets(n in 1usize..60, a in 0.0f64..1.0, seed in 0u64..1000) {
        let alpha = 1.0 / (n as f64 + 1.0) + a * (0.5 - 1.0 / (n as f64 + 1.0)).max(0.0);
        let oracle = oracle_model(hetero());
        let q = oracle_quantiles(alpha);
        let models = BaseModels { conditional: Some(&oracle), quantiles: Some(&q) };
        let calib = sample(n, seed, 1);
        let test = sample(5, seed, 2);
        for spec in all_methods(alpha) {
            let mu = calibrate(&calib, &MethodSpec { quantile_mode: QuantileMode::MuWithInfinity, ..spec }, &models, seed).unwrap();
            let cb = calibrate(&calib, &MethodSpec { quantile_mode: QuantileMode::Cbar, ..spec }, &models, seed).unwrap();
            prop_assert_eq!(mu.quantile_v(), cb.quantile_v(), "{} n={} α={}", spec.name(), n, alpha);
            let (a, b) = (predict_sets(&mu, &test.xs(), &models).unwrap(), predict_sets(&cb, &test.xs(), &models).unwrap());
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn permuting_calibration_points_changes_nothing_for_analytic_methods() {
    let oracle = oracle_model(hetero());
    let q = oracle_quantiles(0.1);
    let models = BaseModels { conditional: Some(&oracle), quantiles: Some(&q) };
    let calib = sample(80, 3, 1);
    let test = sample(20, 3, 2);
    let mut idx: Vec<usize> = (0..calib.len()).collect();
    idx.reverse();
    idx.rotate_left(17);
    let permuted = calib.subset(&idx).unwrap();
    for spec in [make_cp(0.1), make_cqr(0.1), make_cp2_hpd(0.1)] {
        let a = calibrate(&calib, &spec, &models, 5).unwrap();
        let b = calibrate(&permuted, &spec, &models, 5).unwrap();
        assert_eq!(a.quantile_v(), b.quantile_v(), "{}", spec.name());
        assert_eq!(
            predict_sets(&a, &test.xs(), &models).unwrap(),
            predict_sets(&b, &test.xs(), &models).unwrap()
        );
    }
}

/// Split conformal from scratch: scores `|y − 0|` (the oracle mean), the
/// `⌈(1 − α)(n + 1)⌉`-th smallest with integer arithmetic for α = a/b.
fn reference_split_conformal(ys: &[f64], a: usize, b: usize) -> f64 {
    let n = ys.len();
    let k = ((b - a) * (n + 1)).div_ceil(b);
    if k > n {
        return f64::INFINITY;
    }
    let mut s: Vec<f64> = ys.iter().map(|y| y.abs()).collect();
    s.sort_by(|p, q| p.partial_cmp(q).unwrap());
    s[k - 1]
}

#[test]
fn cp_equals_reference_split_conformal() {
    let oracle = oracle_model(hetero());
    let models = BaseModels::conditional(&oracle);
    for (n, a, b) in [(9, 1, 10), (4, 1, 10), (100, 1, 10), (257, 1, 20), (1000, 1, 5)] {
        let calib = sample(n, n as u64, 1);
        let alpha = a as f64 / b as f64;
        let cm = calibrate(&calib, &make_cp(alpha), &models, 1).unwrap();
        let want = reference_split_conformal(&calib.ys(), a, b);
        assert_eq!(cm.quantile_v(), want, "n={n} α={alpha}");
        let set = predict_set(&cm, &[0.3], 0, &models).unwrap();
        if want.is_finite() {
            let iv = bounds(&set);
            assert!((iv[0].0 + want).abs() < 1e-9 && (iv[0].1 - want).abs() < 1e-9);
            // symmetric oracle: symmetric about the prediction
            assert!((iv[0].0 + iv[0].1).abs() < 1e-9);
        } else {
            assert!(set.is_unbounded());
        }
    }
}

/// The oracle whose first (and only) ball center is always the conditional
/// mean; larger requests (the τ draws) come from the true conditional.
struct PointCenter(OracleModel);

impl ConditionalModel for PointCenter {
    fn capabilities(&self) -> Capabilities {
        Capabilities::BOTH
    }

    fn conditional(&self, q: &Query<'_>) -> Result<GaussianMixture> {
        self.0.conditional(q)
    }

    fn sample(&self, q: &Query<'_>, count: usize, rng: &mut Stream) -> Result<Vec<Vec<f64>>> {
        if count == 1 {
            return Ok(vec![self.0.conditional(q)?.mean()]);
        }
        self.0.sample(q, count, rng)
    }
}

#[test]
fn single_point_mass_ball_is_a_fixed_width_interval() {
    let model = PointCenter(oracle_model(hetero()));
    let models = BaseModels::conditional(&model);
    let calib = sample(300, 8, 1);
    let test = sample(50, 8, 2);
    let pcp = make_cp2_pcp(PcpVariant::L, 0.1, 1);
    let fixed = MethodSpec {
        family: FamilyKind::FixedWidth,
        samples: 0,
        ..pcp
    };
    let a = calibrate(&calib, &pcp, &models, 2).unwrap();
    let b = calibrate(&calib, &fixed, &models, 2).unwrap();
    let (sa, sb) = (
        predict_sets(&a, &test.xs(), &models).unwrap(),
        predict_sets(&b, &test.xs(), &models).unwrap(),
    );
    for (p, q) in sa.iter().zip(&sb) {
        let (p, q) = (bounds(p), bounds(q));
        assert_eq!(p.len(), 1);
        assert!((p[0].0 - q[0].0).abs() < 1e-9 && (p[0].1 - q[0].1).abs() < 1e-9, "{p:?} vs {q:?}");
    }
}

#[test]
fn trivial_methods_nest_in_alpha() {
    let oracle = oracle_model(hetero());
    let calib = sample(400, 4, 1);
    let test = sample(40, 4, 2);
    for (a1, a2) in [(0.05, 0.1), (0.1, 0.2), (0.2, 0.5)] {
        let (q1, q2) = (oracle_quantiles(a1), oracle_quantiles(a2));
        let m1 = BaseModels { conditional: Some(&oracle), quantiles: Some(&q1) };
        let m2 = BaseModels { conditional: Some(&oracle), quantiles: Some(&q2) };
        for (s1, s2) in [(make_cp(a1), make_cp(a2)), (make_pcp(a1, 20), make_pcp(a2, 20))] {
            let c1 = calibrate(&calib, &s1, &m1, 6).unwrap();
            let c2 = calibrate(&calib, &s2, &m2, 6).unwrap();
            for (x1, x2) in predict_sets(&c1, &test.xs(), &m1).unwrap().iter().zip(&predict_sets(&c2, &test.xs(), &m2).unwrap()) {
                assert!(x2.is_subset_of(x1), "{}: α={a2} set not inside α={a1} set", s1.name());
            }
        }
    }
}

#[test]
fn cqr_with_true_quantiles_needs_almost_no_correction() {
    let oracle = oracle_model(hetero());
    let q = oracle_quantiles(0.1);
    let models = BaseModels { conditional: Some(&oracle), quantiles: Some(&q) };
    let cm = calibrate(&sample(2000, 12, 1), &make_cqr(0.1), &models, 0).unwrap();
    assert!(cm.quantile_v().abs() < 0.05, "correction {}", cm.quantile_v());
    let set = bounds(&predict_set(&cm, &[0.0], 0, &models).unwrap());
    assert!((set[0].1 - Z95).abs() < 0.05);
}

#[test]
fn pi_yx_ignores_the_calibration_scores() {
    let oracle = oracle_model(hetero());
    let models = BaseModels::conditional(&oracle);
    let spec = make_pi_yx(0.1, 20);
    let a = calibrate(&sample(200, 1, 1), &spec, &models, 3).unwrap();
    let b = calibrate(&sample(50, 2, 1), &spec, &models, 3).unwrap();
    assert_ne!(a.quantile_v(), b.quantile_v());
    let xs = sample(30, 3, 2).xs();
    assert_eq!(predict_sets(&a, &xs, &models).unwrap(), predict_sets(&b, &xs, &models).unwrap());
}

#[test]
fn trivial_adjustment_predicts_the_family_at_the_quantile() {
    let oracle = oracle_model(hetero());
    let models = BaseModels::conditional(&oracle);
    let spec = MethodSpec {
        adjustment: AdjustmentFunction::new(AdjustmentKind::Trivial),
        tau_mode: TauMode::Analytic,
        ..make_cp2_pcp(PcpVariant::L, 0.1, 5)
    };
    let cm = calibrate(&sample(100, 5, 1), &spec, &models, 9).unwrap();
    let x = [0.4];
    let centers = oracle.sample(&Query::new(&x, cp2_core::models::Role::Test, 0), 5, &mut stream(9, Domain::Test, 0)).unwrap();
    let c: Vec<f64> = centers.iter().map(|v| v[0]).collect();
    let want = cp2_core::set::interval_union_from_balls(&c, cm.quantile_v());
    let got = predict_set(&cm, &x, 0, &models).unwrap();
    assert_eq!(got, PredictionSet::from_intervals(want));
}

#[test]
fn perturbed_models_keep_the_tv_lower_bound() {
    let alpha = 0.1;
    let calib = sample(1000, 21, 1);
    let test = sample(4000, 21, 2);
    let mut last_bound = f64::INFINITY;
    for shift in [0.25, 0.5, 1.0] {
        let model = perturb_model(oracle_model(hetero()), shift).unwrap();
        let models = BaseModels::conditional(&model);
        let cm = calibrate(&calib, &make_cp2_pcp(PcpVariant::L, alpha, 20), &models, 4).unwrap();
        let sets = predict_sets(&cm, &test.xs(), &models).unwrap();
        // σ(x) = 1 + x ≥ 1, so the unit-σ distance bounds every x
        let tv = tv_shifted_normals(shift, 1.0);
        let bound = 1.0 - alpha - tv;
        assert!(bound <= last_bound);
        last_bound = bound;
        for bin in 0..10 {
            let (lo, hi) = (bin as f64 / 10.0, (bin + 1) as f64 / 10.0);
            let hits: Vec<bool> = test
                .iter()
                .zip(&sets)
                .filter(|(s, _)| s.x[0] >= lo && s.x[0] < hi)
                .map(|(s, set)| set.contains(&s.y))
                .collect();
            let n = hits.len() as f64;
            let cov = hits.iter().filter(|h| **h).count() as f64 / n;
            let se = (alpha * (1.0 - alpha) / n).sqrt();
            assert!(cov >= bound - 3.0 * se, "shift {shift}, bin {bin}: coverage {cov} < {bound}");
        }
    }
}
