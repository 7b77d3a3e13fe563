//! Brent's method for the smallest τ at which a non-decreasing function
//! becomes non-negative.

use crate::error::{Error, Result};

/// Settings for [`first_nonnegative`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// Absolute tolerance on the returned abscissa.
    pub xtol: f64,
    /// Bracket expansions allowed before giving up.
    pub max_expansions: usize,
    /// Width multiplier per expansion.
    pub growth: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            xtol: 1e-12,
            max_expansions: 60,
            growth: 4.0,
        }
    }
}

/// Brent's zero finder on `[a, b]`, where `f(a) < 0 ≤ f(b)` (or the
/// reverse). `f` may be a step function: points with `f = 0` count as
/// non-negative and do not stop the search, so the result approaches the
/// left edge of a zero plateau. Returns the final bracket end at which `f`
/// is non-negative.
pub fn brent_zero<F>(mut f: F, a: f64, b: f64, fa: f64, fb: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let neg = |v: f64| v < 0.0;
    if neg(fa) == neg(fb) {
        return Err(Error::Bracket(format!("no sign change on [{a}, {b}]")));
    }
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..1000 {
        if neg(fb) == neg(fc) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 {
            break;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
        if fb.is_nan() {
            return Err(Error::Numerical(format!("root function is NaN at {b}")));
        }
    }
    Ok(if neg(fb) { c } else { b })
}

/// Smallest `x` in the open interval `domain` with `g(x) ≥ 0`, for a
/// non-decreasing `g`. The bracket starts at `[-1, 1]` (clipped to the
/// domain) and grows geometrically until it straddles the sign change.
pub fn first_nonnegative<F>(mut g: F, domain: (f64, f64), opts: RootOptions) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (dlo, dhi) = domain;
    let clip = |v: f64, prev: f64| {
        if v <= dlo {
            0.5 * (prev + dlo)
        } else if v >= dhi {
            0.5 * (prev + dhi)
        } else {
            v
        }
    };
    let mut a = clip(-1.0, 0.0);
    let mut b = clip(1.0, 0.0);
    let mut ga = g(a)?;
    let mut gb = g(b)?;
    let mut expansions = 0;
    while ga >= 0.0 || gb < 0.0 {
        if expansions == opts.max_expansions {
            return Err(Error::Bracket(format!(
                "no sign change within [{a}, {b}] after {expansions} expansions"
            )));
        }
        expansions += 1;
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a) * opts.growth;
        if ga >= 0.0 {
            let na = clip(mid - half, a);
            // the old lower end is feasible, so it bounds the answer from above
            b = a;
            gb = ga;
            a = na;
            ga = g(a)?;
        } else {
            let nb = clip(mid + half, b);
            a = b;
            ga = gb;
            b = nb;
            gb = g(b)?;
        }
        if ga.is_nan() || gb.is_nan() {
            return Err(Error::Numerical("root function is NaN".into()));
        }
    }
    brent_zero(g, a, b, ga, gb, opts.xtol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_root() {
        let r = first_nonnegative(|x| Ok(x * x * x - 2.0), (f64::NEG_INFINITY, f64::INFINITY), RootOptions::default())
            .unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-11);
        assert!(r.powi(3) - 2.0 >= 0.0);
    }

    #[test]
    fn step_function_finds_left_edge() {
        let g = |x: f64| Ok(if x >= 0.3 { 0.0 } else { -0.1 });
        let r = first_nonnegative(g, (f64::NEG_INFINITY, f64::INFINITY), RootOptions::default()).unwrap();
        assert!(r >= 0.3 && r - 0.3 < 1e-11);
    }

    #[test]
    fn far_root_needs_expansion() {
        let r = first_nonnegative(|x| Ok(x - 1e6), (f64::NEG_INFINITY, f64::INFINITY), RootOptions::default()).unwrap();
        assert!((r - 1e6).abs() < 1e-6);
        let r = first_nonnegative(|x| Ok(x + 3e3), (f64::NEG_INFINITY, f64::INFINITY), RootOptions::default()).unwrap();
        assert!((r + 3e3).abs() < 1e-8);
    }

    #[test]
    fn unreachable_level_is_bracket_error() {
        let e = first_nonnegative(|_| Ok(-1.0), (f64::NEG_INFINITY, f64::INFINITY), RootOptions::default());
        assert!(matches!(e, Err(Error::Bracket(_))));
    }

    #[test]
    fn respects_open_domain() {
        let lim = std::f64::consts::FRAC_PI_2;
        let r = first_nonnegative(|x| Ok(x.tan() - 50.0), (-lim, lim), RootOptions::default()).unwrap();
        assert!((r - 50f64.atan()).abs() < 1e-11);
    }
}
