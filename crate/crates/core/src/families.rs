//! Nested confidence-set families `R_z(x; t)`.
//!
//! Every family grows with `t`, and `λ(y) = inf{t : y ∈ R(t)}` has a closed
//! form, so `y ∈ R(t)` exactly when `λ(y) ≤ t`. Density superlevel sets are
//! parameterized by the negated threshold to share that orientation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::set::{euclidean, interval_union_from_balls, BallUnion, Interval, IntervalUnion, PredictionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    BallUnion,
    HpdSuperlevel,
    FixedWidth,
    CqrAdditive,
    CqrMultiplicative,
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyKind::BallUnion => "ball-union",
            FamilyKind::HpdSuperlevel => "hpd-superlevel",
            FamilyKind::FixedWidth => "fixed-width",
            FamilyKind::CqrAdditive => "cqr-additive",
            FamilyKind::CqrMultiplicative => "cqr-multiplicative",
        })
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ball-union" => FamilyKind::BallUnion,
            "hpd-superlevel" => FamilyKind::HpdSuperlevel,
            "fixed-width" => FamilyKind::FixedWidth,
            "cqr-additive" => FamilyKind::CqrAdditive,
            "cqr-multiplicative" => FamilyKind::CqrMultiplicative,
            _ => return Err(Error::Config(format!("unknown family `{s}`"))),
        })
    }
}

/// The exogenous sample `Z = (Ŷ_1, …, Ŷ_M)` of a ball-union family.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousDraw {
    pub centers: Vec<Vec<f64>>,
    /// Identifies the random stream the centers came from.
    pub stream_id: u64,
}

impl ExogenousDraw {
    pub fn new(centers: Vec<Vec<f64>>, stream_id: u64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Domain("ball-union family needs at least one center".into()));
        }
        let p = centers[0].len();
        if p == 0 || centers.iter().any(|c| c.len() != p || c.iter().any(|v| !v.is_finite())) {
            return Err(Error::Domain("ball centers must be finite and of equal dimension".into()));
        }
        Ok(Self { centers, stream_id })
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }
}

const HPD_GRID: usize = 4096;
const HPD_TOL: f64 = 1e-10;

/// A scalar mixture with its density tabulated on the scan grid used for
/// superlevel-set extraction.
#[derive(Debug, Clone)]
pub struct HpdProfile {
    mixture: GaussianMixture,
    grid: Vec<f64>,
    dens: Vec<f64>,
}

impl HpdProfile {
    pub fn new(mixture: GaussianMixture) -> Result<Self> {
        if mixture.dim() != 1 {
            return Err(Error::Domain("superlevel sets need a scalar response".into()));
        }
        let (lo, hi) = mixture.support_bracket1();
        let h = (hi - lo) / (HPD_GRID - 1) as f64;
        let grid: Vec<f64> = (0..HPD_GRID).map(|i| lo + i as f64 * h).collect();
        let dens = grid.iter().map(|&y| mixture.density1(y)).collect();
        Ok(Self { mixture, grid, dens })
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.mixture
    }

    pub fn bracket(&self) -> Interval {
        Interval::new(self.grid[0], self.grid[HPD_GRID - 1])
    }

    /// Largest tabulated density, refined around the best grid point.
    pub fn peak_density(&self) -> f64 {
        let i = (0..HPD_GRID).max_by(|&a, &b| self.dens[a].total_cmp(&self.dens[b])).unwrap_or(0);
        let a = self.grid[i.saturating_sub(1)];
        let b = self.grid[(i + 1).min(HPD_GRID - 1)];
        self.dens[i].max(self.mixture.density1(self.golden_max(a, b)))
    }

    fn golden_max(&self, mut a: f64, mut b: f64) -> f64 {
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let (mut fc, mut fd) = (self.mixture.density1(c), self.mixture.density1(d));
        while b - a > HPD_TOL * (1.0 + a.abs().max(b.abs())) {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = self.mixture.density1(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = self.mixture.density1(d);
            }
        }
        0.5 * (a + b)
    }

    /// Boundary between `outside` (density below `c`) and `inside`; returns
    /// the last point known to be outside so the interval closes over the
    /// true boundary.
    fn boundary(&self, mut outside: f64, mut inside: f64, c: f64) -> f64 {
        for _ in 0..200 {
            if (inside - outside).abs() <= HPD_TOL {
                break;
            }
            let mid = 0.5 * (outside + inside);
            if self.mixture.density1(mid) >= c {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        outside
    }

    /// A point beyond the grid edge in direction `dir` whose density is
    /// below `c`.
    fn outside_beyond(&self, from: f64, dir: f64, c: f64) -> f64 {
        let mut step = self.grid[HPD_GRID - 1] - self.grid[0];
        let mut y = from + dir * step;
        for _ in 0..60 {
            if self.mixture.density1(y) < c {
                break;
            }
            step *= 2.0;
            y = from + dir * step;
        }
        y
    }

    /// `{y : p(y) ≥ threshold}` for `threshold > 0`.
    pub fn superlevel(&self, threshold: f64) -> IntervalUnion {
        let c = threshold;
        if !(c > 0.0) {
            return IntervalUnion::single(f64::NEG_INFINITY, f64::INFINITY);
        }
        let g = &self.grid;
        let n = HPD_GRID;
        let mut pieces = Vec::new();
        let mut i = 0;
        while i < n {
            if self.dens[i] >= c {
                let start = i;
                while i + 1 < n && self.dens[i + 1] >= c {
                    i += 1;
                }
                let lo = if start == 0 {
                    self.boundary(self.outside_beyond(g[0], -1.0, c), g[0], c)
                } else {
                    self.boundary(g[start - 1], g[start], c)
                };
                let hi = if i == n - 1 {
                    self.boundary(self.outside_beyond(g[n - 1], 1.0, c), g[n - 1], c)
                } else {
                    self.boundary(g[i + 1], g[i], c)
                };
                pieces.push(Interval::new(lo, hi));
            } else if i > 0 && i + 1 < n && self.dens[i] >= self.dens[i - 1] && self.dens[i] >= self.dens[i + 1] {
                // a narrow peak can cross the threshold between grid points
                let m = self.golden_max(g[i - 1], g[i + 1]);
                // slack of a few ulps so a threshold equal to the peak keeps the mode
                if self.mixture.density1(m) >= c * (1.0 - 1e-14) {
                    pieces.push(Interval::new(self.boundary(g[i - 1], m, c), self.boundary(g[i + 1], m, c)));
                }
            }
            i += 1;
        }
        IntervalUnion::from_intervals(pieces)
    }
}

/// `{y : p(y) ≥ threshold}` for a scalar mixture.
pub fn hpd_superlevel_intervals(m: &GaussianMixture, threshold: f64) -> Result<Vec<Interval>> {
    if !(threshold > 0.0) {
        return Err(Error::Domain(format!("superlevel threshold must be positive, got {threshold}")));
    }
    Ok(HpdProfile::new(m.clone())?.superlevel(threshold).intervals().to_vec())
}

/// A confidence family instantiated at one point `x` (and draw `z`).
#[derive(Debug, Clone)]
pub enum ConfidenceFamily {
    /// `∪ B(Ŷ_i, t)`.
    BallUnion(ExogenousDraw),
    /// `{y : p(y|x) ≥ −t}`.
    HpdSuperlevel(HpdProfile),
    /// `[pred − t, pred + t]`.
    FixedWidth { pred: f64 },
    /// `[q_lo − t, q_hi + t]`.
    CqrAdditive { lo: f64, hi: f64 },
    /// `[q_lo − t·w, q_hi + t·w]` with `w = q_hi − q_lo`.
    CqrMultiplicative { lo: f64, hi: f64 },
}

impl ConfidenceFamily {
    pub fn ball_union(draw: ExogenousDraw) -> Self {
        ConfidenceFamily::BallUnion(draw)
    }

    pub fn hpd(mixture: GaussianMixture) -> Result<Self> {
        Ok(ConfidenceFamily::HpdSuperlevel(HpdProfile::new(mixture)?))
    }

    pub fn cqr_multiplicative(lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::Degenerate(format!(
                "multiplicative CQR family needs q_hi > q_lo, got [{lo}, {hi}]"
            )));
        }
        Ok(ConfidenceFamily::CqrMultiplicative { lo, hi })
    }

    pub fn kind(&self) -> FamilyKind {
        match self {
            ConfidenceFamily::BallUnion(_) => FamilyKind::BallUnion,
            ConfidenceFamily::HpdSuperlevel(_) => FamilyKind::HpdSuperlevel,
            ConfidenceFamily::FixedWidth { .. } => FamilyKind::FixedWidth,
            ConfidenceFamily::CqrAdditive { .. } => FamilyKind::CqrAdditive,
            ConfidenceFamily::CqrMultiplicative { .. } => FamilyKind::CqrMultiplicative,
        }
    }

    /// Response dimension the family lives in.
    pub fn dim(&self) -> usize {
        match self {
            ConfidenceFamily::BallUnion(d) => d.dim(),
            _ => 1,
        }
    }

    /// A finite bracket used when the whole space has to be displayed.
    pub fn support(&self) -> Interval {
        match self {
            ConfidenceFamily::BallUnion(d) => {
                let xs = d.centers.iter().map(|c| c[0]);
                let lo = xs.clone().fold(f64::INFINITY, f64::min);
                let hi = xs.fold(f64::NEG_INFINITY, f64::max);
                Interval::new(lo, hi)
            }
            ConfidenceFamily::HpdSuperlevel(p) => p.bracket(),
            ConfidenceFamily::FixedWidth { pred } => Interval::new(*pred, *pred),
            ConfidenceFamily::CqrAdditive { lo, hi } | ConfidenceFamily::CqrMultiplicative { lo, hi } => {
                Interval::new(*lo, *hi)
            }
        }
    }

    /// `R(x; t)`.
    pub fn set(&self, t: f64) -> Result<PredictionSet> {
        if t.is_nan() {
            return Err(Error::Domain("family parameter is NaN".into()));
        }
        if t == f64::INFINITY {
            return Ok(PredictionSet::whole(self.support()));
        }
        let u = match self {
            ConfidenceFamily::BallUnion(d) => {
                if d.dim() > 1 {
                    return Ok(PredictionSet::Balls(BallUnion {
                        centers: d.centers.clone(),
                        radius: t,
                    }));
                }
                let c: Vec<f64> = d.centers.iter().map(|c| c[0]).collect();
                interval_union_from_balls(&c, t)
            }
            ConfidenceFamily::HpdSuperlevel(p) => {
                if t >= 0.0 {
                    return Ok(PredictionSet::whole(p.bracket()));
                }
                p.superlevel(-t)
            }
            ConfidenceFamily::FixedWidth { pred } => IntervalUnion::single(pred - t, pred + t),
            ConfidenceFamily::CqrAdditive { lo, hi } => IntervalUnion::single(lo - t, hi + t),
            ConfidenceFamily::CqrMultiplicative { lo, hi } => {
                let w = hi - lo;
                IntervalUnion::single(lo - t * w, hi + t * w)
            }
        };
        Ok(PredictionSet::from_intervals(u))
    }

    /// `λ(y) = inf{t : y ∈ R(x; t)}`.
    pub fn lambda(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.dim() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("expected {} finite response values", self.dim())));
        }
        let y0 = y[0];
        let v = match self {
            ConfidenceFamily::BallUnion(d) => d
                .centers
                .iter()
                .map(|c| euclidean(c, y))
                .fold(f64::INFINITY, f64::min),
            ConfidenceFamily::HpdSuperlevel(p) => -p.mixture.density1(y0),
            ConfidenceFamily::FixedWidth { pred } => (y0 - pred).abs(),
            ConfidenceFamily::CqrAdditive { lo, hi } => (lo - y0).max(y0 - hi),
            ConfidenceFamily::CqrMultiplicative { lo, hi } => (lo - y0).max(y0 - hi) / (hi - lo),
        };
        if !v.is_finite() {
            return Err(Error::Numerical(format!("non-finite score {v} for the {} family", self.kind())));
        }
        if matches!(self, ConfidenceFamily::HpdSuperlevel(_)) || self.dim() > 1 {
            return Ok(v);
        }
        // rounding in the set endpoints can leave y an ulp outside R(v)
        let mut t = v;
        for _ in 0..16 {
            if self.contains_scalar_at(t, y0) {
                return Ok(t);
            }
            t = t.next_up();
        }
        Err(Error::Numerical(format!("score {v} does not place {y0} inside its set")))
    }

    /// `y ∈ R(x; t)` for the closed-form scalar families, with the same
    /// endpoint arithmetic as [`ConfidenceFamily::set`] but no allocation.
    fn contains_scalar_at(&self, t: f64, y: f64) -> bool {
        let within = |lo: f64, hi: f64| lo <= y && y <= hi;
        match self {
            ConfidenceFamily::BallUnion(d) => t >= 0.0 && d.centers.iter().any(|c| within(c[0] - t, c[0] + t)),
            ConfidenceFamily::FixedWidth { pred } => within(pred - t, pred + t),
            ConfidenceFamily::CqrAdditive { lo, hi } => within(lo - t, hi + t),
            ConfidenceFamily::CqrMultiplicative { lo, hi } => {
                let w = hi - lo;
                within(lo - t * w, hi + t * w)
            }
            ConfidenceFamily::HpdSuperlevel(_) => unreachable!("superlevel membership needs the density"),
        }
    }

    /// `Π(R(x; t))` under a scalar mixture, computed exactly.
    pub fn mass(&self, t: f64, m: &GaussianMixture) -> Result<f64> {
        if m.dim() != 1 || self.dim() != 1 {
            return Err(Error::Capability(
                "analytic mass is only available for scalar responses; use monte-carlo".into(),
            ));
        }
        Ok(match self.set(t)? {
            PredictionSet::Unbounded { .. } => 1.0,
            PredictionSet::Intervals { intervals } => intervals
                .intervals()
                .iter()
                .map(|iv| m.interval_mass(iv.lo, iv.hi))
                .sum::<f64>()
                .min(1.0),
            PredictionSet::Balls(_) => unreachable!("scalar families produce intervals"),
        })
    }

    /// Fraction of `draws` inside `R(x; t)`.
    pub fn empirical_mass(&self, t: f64, draws: &[Vec<f64>]) -> Result<f64> {
        if draws.is_empty() {
            return Err(Error::Domain("empirical mass needs at least one draw".into()));
        }
        let mut inside = 0usize;
        for y in draws {
            if self.lambda(y)? <= t {
                inside += 1;
            }
        }
        Ok(inside as f64 / draws.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PEAK: f64 = 0.398_942_280_401_432_7;

    #[test]
    fn ball_union_set_and_lambda() {
        let f = ConfidenceFamily::ball_union(ExogenousDraw::new(vec![vec![0.0], vec![10.0]], 0).unwrap());
        let s = f.set(1.0).unwrap();
        assert_eq!(s.as_intervals().unwrap().intervals(), &[Interval::new(-1.0, 1.0), Interval::new(9.0, 11.0)]);
        assert_eq!(f.lambda(&[4.0]).unwrap(), 4.0);
        assert!(f.set(-0.5).unwrap().as_intervals().unwrap().is_empty());
    }

    #[test]
    fn interval_kinds() {
        let f = ConfidenceFamily::FixedWidth { pred: 2.0 };
        assert_eq!(f.set(0.5).unwrap().as_intervals().unwrap().intervals(), &[Interval::new(1.5, 2.5)]);
        let c = ConfidenceFamily::CqrAdditive { lo: -1.0, hi: 1.0 };
        assert_eq!(c.lambda(&[0.0]).unwrap(), -1.0);
        let m = ConfidenceFamily::cqr_multiplicative(-1.0, 1.0).unwrap();
        assert_eq!(m.set(0.5).unwrap().as_intervals().unwrap().intervals(), &[Interval::new(-2.0, 2.0)]);
        assert_eq!(m.lambda(&[3.0]).unwrap(), 1.0);
        assert!(ConfidenceFamily::cqr_multiplicative(1.0, 1.0).is_err());
    }

    #[test]
    fn hpd_peak_threshold_is_a_point() {
        let f = ConfidenceFamily::hpd(GaussianMixture::standard_normal()).unwrap();
        let s = f.set(-GaussianMixture::standard_normal().density1(0.0)).unwrap();
        let u = s.as_intervals().unwrap();
        assert_eq!(u.len(), 1);
        // p(y) equals the peak in f64 for |y| below about 1.5e-8
        assert!(u.measure() < 1e-7);
        assert!(u.intervals()[0].lo.abs() < 1e-7);
        assert!((f.lambda(&[0.0]).unwrap() + PEAK).abs() < 1e-15);
        assert!(hpd_superlevel_intervals(&GaussianMixture::standard_normal(), PEAK * 1.0001).unwrap().is_empty());
    }

    #[test]
    fn hpd_unit_threshold() {
        let m = GaussianMixture::standard_normal();
        let iv = hpd_superlevel_intervals(&m, m.density1(1.0)).unwrap();
        assert_eq!(iv.len(), 1);
        assert!((iv[0].lo + 1.0).abs() < 1e-8 && (iv[0].hi - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hpd_bimodal_two_pieces() {
        let m = GaussianMixture::univariate(&[0.5, 0.5], &[-3.0, 3.0], &[0.5, 0.5]).unwrap();
        let saddle = m.density1(0.0);
        let peak = m.density1(3.0);
        let iv = hpd_superlevel_intervals(&m, 0.5 * (saddle + peak)).unwrap();
        assert_eq!(iv.len(), 2);
        assert!(iv[0].hi < 0.0 && iv[1].lo > 0.0);
    }

    #[test]
    fn hpd_nonnegative_parameter_is_everything() {
        let f = ConfidenceFamily::hpd(GaussianMixture::standard_normal()).unwrap();
        assert!(f.set(0.0).unwrap().is_unbounded());
        assert_eq!(f.mass(0.0, &GaussianMixture::standard_normal()).unwrap(), 1.0);
    }

    #[test]
    fn fixed_width_mass_is_normal_probability() {
        let f = ConfidenceFamily::FixedWidth { pred: 0.0 };
        let m = GaussianMixture::standard_normal();
        assert!((f.mass(1.959963984540054, &m).unwrap() - 0.95).abs() < 1e-6);
        assert_eq!(f.mass(f64::INFINITY, &m).unwrap(), 1.0);
    }

    #[test]
    fn vector_balls() {
        let f = ConfidenceFamily::ball_union(ExogenousDraw::new(vec![vec![0.0, 0.0], vec![3.0, 4.0]], 0).unwrap());
        assert_eq!(f.lambda(&[3.0, 0.0]).unwrap(), 3.0);
        let s = f.set(1.0).unwrap();
        assert!(s.contains(&[3.0, 4.5]) && !s.contains(&[1.5, 2.0]));
        assert!(matches!(f.mass(1.0, &GaussianMixture::standard_normal()), Err(Error::Capability(_))));
    }
}
