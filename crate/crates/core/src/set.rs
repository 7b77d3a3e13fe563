//! Prediction sets: unions of closed intervals (scalar responses) and unions
//! of balls with a common radius (vector responses).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed interval `[lo, hi]`. Serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(iv: Interval) -> Self {
        [iv.lo, iv.hi]
    }
}

/// Sorted, pairwise disjoint closed intervals. Serialized as an ordered
/// list of `[a, b]` pairs; deserialization re-canonicalizes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct IntervalUnion {
    intervals: Vec<Interval>,
}

impl From<Vec<Interval>> for IntervalUnion {
    fn from(v: Vec<Interval>) -> Self {
        IntervalUnion::from_intervals(v)
    }
}

impl From<IntervalUnion> for Vec<Interval> {
    fn from(u: IntervalUnion) -> Self {
        u.intervals
    }
}

impl IntervalUnion {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(lo: f64, hi: f64) -> Self {
        Self::from_intervals([Interval::new(lo, hi)])
    }

    /// Builds the canonical form: empty pieces dropped, the rest sorted and
    /// merged wherever they overlap or touch.
    pub fn from_intervals<I: IntoIterator<Item = Interval>>(pieces: I) -> Self {
        let mut v: Vec<Interval> = pieces.into_iter().filter(|iv| !iv.is_empty()).collect();
        v.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi)));
        let mut merged: Vec<Interval> = Vec::with_capacity(v.len());
        for iv in v {
            match merged.last_mut() {
                Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
                _ => merged.push(iv),
            }
        }
        Self { intervals: merged }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(Interval::len).sum()
    }

    pub fn contains(&self, y: f64) -> bool {
        // intervals are sorted by lower end
        let idx = self.intervals.partition_point(|iv| iv.lo <= y);
        idx > 0 && self.intervals[idx - 1].contains(y)
    }

    /// `self ⊆ other`. Each piece of `self` is connected, so it must sit
    /// inside a single piece of `other`.
    pub fn is_subset_of(&self, other: &IntervalUnion) -> bool {
        self.intervals
            .iter()
            .all(|iv| other.intervals.iter().any(|o| o.contains_interval(iv)))
    }

    pub fn hull(&self) -> Option<Interval> {
        Some(Interval::new(self.intervals.first()?.lo, self.intervals.last()?.hi))
    }
}

/// Union of closed Euclidean balls sharing one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallUnion {
    pub centers: Vec<Vec<f64>>,
    pub radius: f64,
}

impl BallUnion {
    pub fn contains(&self, y: &[f64]) -> bool {
        self.radius >= 0.0 && self.centers.iter().any(|c| euclidean(c, y) <= self.radius)
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 1 && b.len() == 1 {
        return (a[0] - b[0]).abs();
    }
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// Merges the balls `[c - r, c + r]` around scalar centers into an
/// [`IntervalUnion`].
pub fn interval_union_from_balls(centers: &[f64], radius: f64) -> IntervalUnion {
    if radius < 0.0 {
        return IntervalUnion::empty();
    }
    IntervalUnion::from_intervals(centers.iter().map(|&c| Interval::new(c - radius, c + radius)))
}

/// A prediction set for one test point.
///
/// Scalar responses are always carried as [`IntervalUnion`]; ball unions
/// only appear for vector responses. `Unbounded` is the whole response
/// space, produced when the conformal quantile is infinite; `support` is the
/// bracket used when a finite stand-in is needed for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredictionSet {
    Intervals {
        intervals: IntervalUnion,
    },
    Balls(BallUnion),
    Unbounded {
        unbounded: bool,
        support: Interval,
    },
}

impl PredictionSet {
    pub fn from_intervals(u: IntervalUnion) -> Self {
        PredictionSet::Intervals { intervals: u }
    }

    pub fn whole(support: Interval) -> Self {
        PredictionSet::Unbounded {
            unbounded: true,
            support,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, PredictionSet::Unbounded { .. })
    }

    pub fn as_intervals(&self) -> Option<&IntervalUnion> {
        match self {
            PredictionSet::Intervals { intervals } => Some(intervals),
            _ => None,
        }
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        match self {
            PredictionSet::Intervals { intervals } => y.len() == 1 && intervals.contains(y[0]),
            PredictionSet::Balls(b) => b.contains(y),
            PredictionSet::Unbounded { .. } => true,
        }
    }

    pub fn contains_scalar(&self, y: f64) -> bool {
        self.contains(&[y])
    }

    /// Number of connected pieces (1 for the whole space).
    pub fn component_count(&self) -> usize {
        match self {
            PredictionSet::Intervals { intervals } => intervals.len(),
            PredictionSet::Balls(b) => b.centers.len(),
            PredictionSet::Unbounded { .. } => 1,
        }
    }

    /// Lebesgue measure; `+∞` for the whole space. Unions of balls in more
    /// than one dimension have no closed-form measure and are rejected.
    pub fn measure(&self) -> Result<f64> {
        match self {
            PredictionSet::Intervals { intervals } => Ok(intervals.measure()),
            PredictionSet::Unbounded { .. } => Ok(f64::INFINITY),
            PredictionSet::Balls(b) => {
                if b.centers.first().map_or(1, Vec::len) == 1 {
                    let c: Vec<f64> = b.centers.iter().map(|c| c[0]).collect();
                    Ok(interval_union_from_balls(&c, b.radius).measure())
                } else {
                    Err(Error::Domain(
                        "measure of a multi-dimensional ball union is not available".into(),
                    ))
                }
            }
        }
    }

    /// `self ⊆ other` for scalar sets.
    pub fn is_subset_of(&self, other: &PredictionSet) -> bool {
        match (self, other) {
            (_, PredictionSet::Unbounded { .. }) => true,
            (PredictionSet::Unbounded { .. }, _) => false,
            (PredictionSet::Intervals { intervals: a }, PredictionSet::Intervals { intervals: b }) => {
                a.is_subset_of(b)
            }
            (PredictionSet::Balls(a), PredictionSet::Balls(b)) => {
                a.radius <= b.radius && a.centers == b.centers || a.radius < 0.0
            }
            _ => false,
        }
    }
}
