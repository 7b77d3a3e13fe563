use std::path::PathBuf;

use cp2_core::data::{dgp_conditional, dgp_sample, SyntheticDgp};
use cp2_core::dataset::{load_csv, split, SplitSpec};
use cp2_core::models::read_mixture_file;
use cp2_core::rng::{stream, Domain};
use cp2_core::Error;
use rand::Rng;

fn kinds() -> [SyntheticDgp; 3] {
    ["bimodal1d".parse().unwrap(), "gmm4".parse().unwrap(), "hetero1d".parse().unwrap()]
}

fn x_range(dgp: &SyntheticDgp) -> (f64, f64) {
    match dgp {
        SyntheticDgp::Bimodal1d(p) => (p.x_lo, p.x_hi),
        SyntheticDgp::Gmm4(_) => (-3.5, 3.5),
        SyntheticDgp::Hetero1d(_) => (0.0, 1.0),
    }
}

#[test]
fn conditional_densities_integrate_to_one() {
    for dgp in kinds() {
        let (lo, hi) = x_range(&dgp);
        let mut r = stream(1, Domain::Custom(5), 0);
        for _ in 0..100 {
            let x = r.random_range(lo..hi);
            let m = dgp_conditional(&dgp, &[x]).unwrap();
            let (a, b) = m.support_bracket1();
            let n = 200_001;
            let h = (b - a) / (n - 1) as f64;
            let inner: f64 = (1..n - 1).map(|i| m.density1(a + h * i as f64)).sum();
            let total = h * (inner + 0.5 * (m.density1(a) + m.density1(b)));
            assert!((total - 1.0).abs() < 1e-6, "{} x = {x}: {total}", dgp.name());
        }
    }
}

#[test]
fn sampler_agrees_with_conditional_on_x_slices() {
    for dgp in kinds() {
        let data = dgp_sample(&dgp, 100_000, &mut stream(2, Domain::Data, 0)).unwrap();
        // slices where x has enough mass for a 0.05 KS resolution
        let slices = match dgp {
            SyntheticDgp::Gmm4(_) => [-2.0, 1.8],
            _ => {
                let (lo, hi) = x_range(&dgp);
                [lo + 0.3 * (hi - lo), lo + 0.6 * (hi - lo)]
            }
        };
        for x0 in slices {
            let mut ys: Vec<f64> = data
                .iter()
                .filter(|s| (s.x[0] - x0).abs() < 0.02)
                .map(|s| s.y[0])
                .collect();
            assert!(ys.len() > 700, "{}: slice at {x0} has {} points", dgp.name(), ys.len());
            ys.sort_by(f64::total_cmp);
            let m = dgp_conditional(&dgp, &[x0]).unwrap();
            let n = ys.len() as f64;
            let ks = ys
                .iter()
                .enumerate()
                .map(|(i, y)| {
                    let f = m.cdf1(*y);
                    (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks < 0.05, "{} at x = {x0}: KS {ks}", dgp.name());
        }
    }
}

#[test]
fn split_is_an_exhaustive_partition() {
    let data = dgp_sample(&kinds()[0], 101, &mut stream(3, Domain::Data, 0)).unwrap();
    let spec = SplitSpec {
        train_fraction: 0.5,
        calib_fraction: 0.3,
        test_fraction: 0.2,
        seed: 4,
    };
    let (a, b, c) = split(&data, &spec).unwrap();
    let mut parts: Vec<(u64, u64)> = a
        .iter()
        .chain(b.iter())
        .chain(c.iter())
        .map(|s| (s.x[0].to_bits(), s.y[0].to_bits()))
        .collect();
    let mut all: Vec<(u64, u64)> = data.iter().map(|s| (s.x[0].to_bits(), s.y[0].to_bits())).collect();
    parts.sort();
    all.sort();
    assert_eq!(parts, all);
    assert_eq!(split(&data, &spec).unwrap().1, b);
}

fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(rel)
}

#[test]
fn csv_fixture_loads_three_rows() {
    let path = repo_path("tests/fixtures/three_rows.csv");
    let loaded = load_csv(&path, &["load".to_string()], &[], true).unwrap();
    assert_eq!(loaded.dataset.len(), 3);
    assert_eq!(loaded.dataset.feature_dim(), 2);
    for j in 0..2 {
        let mean: f64 = loaded.dataset.iter().map(|s| s.x[j]).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-10);
    }
    let missing = load_csv(&path, &["price".to_string()], &[], false).unwrap_err();
    assert!(matches!(missing, Error::MissingColumn(_)), "{missing:?}");
}

#[test]
fn documented_mixture_sample_parses() {
    let table = read_mixture_file(repo_path("../../docs/mixture_sample.txt")).unwrap();
    assert_eq!(table.len(), 3);
    assert_eq!(table.get(2).unwrap().n_components(), 3);
}
