//! Coverage and size metrics for a batch of prediction sets.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};
use crate::set::PredictionSet;

/// Default number of slab directions searched by [`worst_slab_coverage`].
pub const DEFAULT_DIRECTIONS: usize = 1000;

/// A non-negative size that may be infinite. Serialized as a number, or as
/// the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Size(pub f64);

impl Size {
    pub fn is_infinite(&self) -> bool {
        self.0.is_infinite()
    }
}

impl Serialize for Size {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for Size {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Size(v)),
            Raw::Str(s) if s == "inf" => Ok(Size(f64::INFINITY)),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("invalid size `{s}`"))),
        }
    }
}

/// Fraction of responses that fall in their prediction set.
pub fn marginal_coverage(sets: &[PredictionSet], truths: &[Vec<f64>]) -> Result<f64> {
    Ok(mean_flag(&covered_flags(sets, truths)?))
}

pub fn covered_flags(sets: &[PredictionSet], truths: &[Vec<f64>]) -> Result<Vec<bool>> {
    if sets.len() != truths.len() {
        return Err(Error::Domain(format!("{} sets but {} responses", sets.len(), truths.len())));
    }
    Ok(sets.iter().zip(truths).map(|(s, y)| s.contains(y)).collect())
}

fn mean_flag(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    flags.iter().filter(|c| **c).count() as f64 / flags.len() as f64
}

/// Mean Lebesgue measure divided by `y_std`; infinite as soon as one set is
/// unbounded.
pub fn scaled_size(sets: &[PredictionSet], y_std: f64) -> Result<Size> {
    if !(y_std > 0.0 && y_std.is_finite()) {
        return Err(Error::Domain(format!("response scale must be positive, got {y_std}")));
    }
    if sets.is_empty() {
        return Ok(Size(0.0));
    }
    let mut total = 0.0;
    for s in sets {
        total += s.measure()?;
    }
    Ok(Size(total / sets.len() as f64 / y_std))
}

/// Coverage flags grouped by distinct projected value, in increasing order.
fn grouped(proj: &[f64], covered: &[bool]) -> (Vec<u32>, Vec<u32>) {
    let mut order: Vec<usize> = (0..proj.len()).collect();
    order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]));
    let mut counts = Vec::with_capacity(proj.len());
    let mut hits = Vec::with_capacity(proj.len());
    let mut last = f64::NAN;
    for i in order {
        if proj[i] == last {
            *counts.last_mut().unwrap() += 1;
            *hits.last_mut().unwrap() += covered[i] as u32;
        } else {
            counts.push(1);
            hits.push(covered[i] as u32);
            last = proj[i];
        }
    }
    (counts, hits)
}

/// Window of consecutive groups holding at least `w` points whose value
/// `hits − θ·count` is smallest; returns `(value, hits, count)`.
fn best_window(counts: &[u32], hits: &[u32], w: u64, theta: f64) -> (f64, u64, u64) {
    let g = counts.len();
    // prefix sums over groups: P[j] covers groups 0..j
    let mut pc = vec![0u64; g + 1];
    let mut ph = vec![0u64; g + 1];
    for j in 0..g {
        pc[j + 1] = pc[j] + counts[j] as u64;
        ph[j + 1] = ph[j] + hits[j] as u64;
    }
    let val = |j: usize| ph[j] as f64 - theta * pc[j] as f64;
    let mut best = (f64::INFINITY, 0, 0);
    // best start so far: the admissible i maximizing val(i)
    let mut i_ptr = 0;
    let mut best_i: Option<usize> = None;
    for j in 1..=g {
        while i_ptr < j && pc[j] - pc[i_ptr] >= w {
            if best_i.is_none_or(|b| val(i_ptr) > val(b)) {
                best_i = Some(i_ptr);
            }
            i_ptr += 1;
        }
        if let Some(i) = best_i {
            let v = val(j) - val(i);
            if v < best.0 {
                best = (v, ph[j] - ph[i], pc[j] - pc[i]);
            }
        }
    }
    best
}

/// Exact minimum coverage over contiguous windows of at least `w` points
/// along one sorted projection.
fn min_window_coverage(proj: &[f64], covered: &[bool], w: u64) -> f64 {
    let (counts, hits) = grouped(proj, covered);
    let n = proj.len() as f64;
    // window coverages are fractions with denominator ≤ n, so two distinct
    // values differ by more than 1/n²
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut witness = best_window(&counts, &hits, w, hi);
    while hi - lo > 0.5 / (n * n) {
        let mid = 0.5 * (lo + hi);
        let cand = best_window(&counts, &hits, w, mid);
        if cand.0 <= 0.0 {
            hi = mid;
            witness = cand;
        } else {
            lo = mid;
        }
    }
    witness.1 as f64 / witness.2 as f64
}

/// Unit directions: the canonical axes followed by Gaussian-normalized
/// random directions, `max(n_directions, d)` in total.
pub fn slab_directions(d: usize, n_directions: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..d).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut r = rng::stream(seed, Domain::Directions, 0);
    while dirs.len() < n_directions.max(d) {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            dirs.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    dirs
}

/// Smallest coverage over slabs `{x : a < vᵀx < b}` holding at least a
/// `1 − δ` fraction of the points, searched over [`slab_directions`].
pub fn worst_slab_coverage(xs: &[Vec<f64>], covered: &[bool], delta: f64, n_directions: usize, seed: u64) -> Result<f64> {
    let n = xs.len();
    if covered.len() != n {
        return Err(Error::Domain(format!("{n} points but {} coverage flags", covered.len())));
    }
    let frac = 1.0 - delta;
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::Domain(format!("slab fraction 1 − δ must lie in (0, 1], got {frac}")));
    }
    if n < 2 {
        return Err(Error::Degenerate(format!("worst-slab coverage needs at least 2 points, got {n}")));
    }
    let w = crate::order::ceil_snapped(frac * n as f64) as u64;
    if w as usize > n {
        return Err(Error::Degenerate(format!("window of {w} points exceeds the sample of {n}")));
    }
    let d = xs[0].len();
    // v and −v give the same slabs; in one dimension every direction is ±1
    let mut dirs: Vec<Vec<f64>> = slab_directions(d, n_directions, seed)
        .into_iter()
        .map(|v| {
            let flip = v.iter().find(|a| **a != 0.0).is_some_and(|a| *a < 0.0);
            if flip { v.into_iter().map(|a| -a).collect() } else { v }
        })
        .collect();
    dirs.sort_by(|a, b| a.iter().zip(b).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    dirs.dedup();
    let worst = dirs
        .par_iter()
        .map(|v| {
            let proj: Vec<f64> = xs.iter().map(|x| x.iter().zip(v).map(|(a, b)| a * b).sum()).collect();
            min_window_coverage(&proj, covered, w)
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(worst.min(mean_flag(covered)))
}

/// One test point's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointOutcome {
    pub covered: bool,
    pub measure: Size,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabCoverage {
    pub delta: f64,
    pub wsc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub alpha: f64,
    pub n_test: usize,
    pub marginal_coverage: f64,
    pub wsc: Vec<SlabCoverage>,
    pub mean_scaled_size: Size,
    pub seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub points: Vec<PointOutcome>,
}

/// Settings for [`evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub alpha: f64,
    pub deltas: Vec<f64>,
    pub n_directions: usize,
    pub seed: u64,
    pub keep_points: bool,
}

pub fn evaluate(
    sets: &[PredictionSet],
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    y_std: f64,
    cfg: &EvalConfig,
) -> Result<EvaluationReport> {
    let flags = covered_flags(sets, ys)?;
    let wsc = cfg
        .deltas
        .iter()
        .map(|&delta| {
            Ok(SlabCoverage {
                delta,
                wsc: worst_slab_coverage(xs, &flags, delta, cfg.n_directions, cfg.seed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let points = if cfg.keep_points {
        sets.iter()
            .zip(&flags)
            .map(|(s, c)| Ok(PointOutcome { covered: *c, measure: Size(s.measure()?) }))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(EvaluationReport {
        alpha: cfg.alpha,
        n_test: sets.len(),
        marginal_coverage: mean_flag(&flags),
        wsc,
        mean_scaled_size: scaled_size(sets, y_std)?,
        seed: cfg.seed,
        points,
    })
}
