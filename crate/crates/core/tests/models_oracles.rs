use cp2_core::data::{dgp_conditional, dgp_sample, oracle_model, Gmm4, SyntheticDgp};
use cp2_core::models::{
    fit_quantile_regressor, gmm_fit_em, ConditionalModel, EmConfig, JointGmmModel, QuantileMethod, Query,
};
use cp2_core::rng::{stream, Domain};
use cp2_core::GaussianMixture;
use rand::Rng;

fn random_joint(seed: u64) -> GaussianMixture {
    let mut r = stream(seed, Domain::Custom(1), 0);
    let w: Vec<f64> = (0..3).map(|_| r.random_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    GaussianMixture::new(
        w.iter().map(|v| v / s).collect(),
        (0..3).map(|_| vec![r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)]).collect(),
        (0..3).map(|_| vec![r.random_range(0.2..2.0), r.random_range(0.2..2.0)]).collect(),
    )
    .unwrap()
}

/// Trapezoid rule for `∫ f` over `[a, b]` on `n` points.
fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / (n - 1) as f64;
    let inner: f64 = (1..n - 1).map(|i| f(a + h * i as f64)).sum();
    h * (inner + 0.5 * (f(a) + f(b)))
}

#[test]
fn conditioning_matches_brute_force_normalization() {
    for case in 0..100u64 {
        let joint = random_joint(case);
        let model = JointGmmModel::from_joint(joint.clone(), 1).unwrap();
        let x = stream(case, Domain::Custom(2), 0).random_range(-4.0..4.0);
        let cond = model.conditional(&Query::at(&[x])).unwrap();
        let norm = trapezoid(|y| joint.density(&[x, y]), -20.0, 20.0, 100_000);
        for y in [-3.0, -1.1, 0.0, 0.7, 2.5] {
            let brute = joint.density(&[x, y]) / norm;
            assert!((cond.density1(y) - brute).abs() < 1e-6, "case {case} y {y}");
        }
    }
}

#[test]
fn conditionals_are_valid_mixtures() {
    let mut r = stream(3, Domain::Custom(3), 0);
    for case in 0..1000u64 {
        let model = JointGmmModel::from_joint(random_joint(case % 50), 1).unwrap();
        let x = r.random_range(-30.0..30.0);
        let c = model.conditional(&Query::at(&[x])).unwrap();
        let s: f64 = c.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(c.weights().iter().all(|w| *w >= 0.0));
        assert!(c.variances().iter().all(|v| v[0] > 0.0));
    }
}

#[test]
fn em_log_likelihood_never_decreases() {
    let dgps: [SyntheticDgp; 3] = ["gmm4".parse().unwrap(), "bimodal1d".parse().unwrap(), "hetero1d".parse().unwrap()];
    for (i, dgp) in dgps.iter().enumerate() {
        for k in 1..=4 {
            let data = dgp_sample(dgp, 1500, &mut stream(i as u64, Domain::Data, k as u64)).unwrap();
            let m = gmm_fit_em(&data, &EmConfig::new(k, 9)).unwrap();
            let t = m.loglik_trace();
            assert!(!t.is_empty());
            for j in 1..t.len() {
                if m.reseeds().contains(&j) {
                    continue;
                }
                assert!(t[j] >= t[j - 1] - 1e-9 * t[j - 1].abs(), "{} k={k} step {j}", dgp.name());
            }
        }
    }
}

/// Kolmogorov–Smirnov distance between two CDFs on a grid.
fn ks(a: &GaussianMixture, b: &GaussianMixture) -> f64 {
    (0..4001)
        .map(|i| -8.0 + 16.0 * i as f64 / 4000.0)
        .map(|y| (a.cdf1(y) - b.cdf1(y)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn fitted_gmm_recovers_the_oracle_conditional() {
    let dgp = SyntheticDgp::Gmm4(Gmm4 {
        weights: [0.4, 0.1, 0.1, 0.4],
        ..Gmm4::default()
    });
    let data = dgp_sample(&dgp, 10_000, &mut stream(5, Domain::Data, 0)).unwrap();
    let fitted = gmm_fit_em(&data, &EmConfig::new(4, 5)).unwrap();
    let oracle = oracle_model(dgp);
    for x in [-2.0, -0.5, 0.0, 1.0, 2.5] {
        let q = Query::at(std::slice::from_ref(&x));
        let d = ks(&fitted.conditional(&q).unwrap(), &oracle.conditional(&q).unwrap());
        assert!(d < 0.05, "x = {x}: KS {d}");
    }
}

#[test]
fn oracle_density_is_the_analytic_form() {
    let dgp: SyntheticDgp = "hetero1d".parse().unwrap();
    let m = oracle_model(dgp).conditional(&Query::at(&[0.5])).unwrap();
    let want = (-0.5f64 * (0.3 / 1.5f64).powi(2)).exp() / (1.5 * (2.0 * std::f64::consts::PI).sqrt());
    assert!((m.density1(0.3) - want).abs() < 1e-15);
}

#[test]
fn sampling_is_independent_of_thread_count() {
    let model = oracle_model("bimodal1d".parse().unwrap());
    let draw = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            use rayon::prelude::*;
            (0..64u64)
                .into_par_iter()
                .map(|i| {
                    let x = [i as f64 / 16.0];
                    model
                        .sample(&Query::at(&x), 20, &mut stream(77, Domain::Calib, i))
                        .unwrap()
                })
                .collect::<Vec<_>>()
        })
    };
    assert_eq!(draw(1), draw(4));
}

#[test]
fn model_densities_integrate_to_one() {
    let fitted = {
        let data = dgp_sample(&"gmm4".parse().unwrap(), 2000, &mut stream(1, Domain::Data, 0)).unwrap();
        gmm_fit_em(&data, &EmConfig::new(4, 1)).unwrap()
    };
    for x in [-3.0, -1.0, 0.0, 0.4, 2.2] {
        let m = fitted.conditional(&Query::at(&[x])).unwrap();
        let (a, b) = m.support_bracket1();
        let total = trapezoid(|y| m.density1(y), a, b, 20_001);
        assert!((total - 1.0).abs() < 1e-3, "x = {x}: {total}");
    }
}

#[test]
fn quantile_predictions_are_monotone_in_level() {
    let data = dgp_sample(&"bimodal1d".parse().unwrap(), 3000, &mut stream(2, Domain::Data, 0)).unwrap();
    let levels = [0.05, 0.25, 0.5, 0.75, 0.95];
    for method in [QuantileMethod::Knn { k: None }, QuantileMethod::LinearPinball { epochs: 300 }] {
        let q = fit_quantile_regressor(&data, &levels, method).unwrap();
        for i in 0..=50 {
            let x = [5.0 * i as f64 / 50.0];
            let p = q.predict_all(&x).unwrap();
            assert!(p.windows(2).all(|w| w[0] <= w[1]), "{method:?} at {x:?}: {p:?}");
        }
    }
}

#[test]
fn dgp_conditional_matches_oracle_model() {
    let dgp: SyntheticDgp = "gmm4".parse().unwrap();
    let a = dgp_conditional(&dgp, &[0.3]).unwrap();
    let b = oracle_model(dgp).conditional(&Query::at(&[0.3])).unwrap();
    assert_eq!(a, b);
}
