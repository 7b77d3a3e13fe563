//! Order-statistic ranks shared by the quantile regressors and the
//! conformal quantile.

/// `⌈x⌉`, except that values within `1e-9` (relative) of an integer are
/// taken to be that integer, so `⌈0.9 · 10⌉` is 9 and not 10.
pub fn ceil_snapped(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// 1-based rank of the empirical `level`-quantile among `n` values,
/// `inf{t : F_n(t) ≥ level}`. The rank can exceed `n` when `level > 1`.
pub fn quantile_rank(level: f64, n: usize) -> usize {
    (ceil_snapped(level * n as f64).max(1.0)) as usize
}

/// Empirical `level`-quantile of already sorted values; `+∞` when the rank
/// exceeds the sample size.
pub fn sorted_quantile(sorted: &[f64], level: f64) -> f64 {
    let k = quantile_rank(level, sorted.len());
    if k > sorted.len() {
        f64::INFINITY
    } else {
        sorted[k - 1]
    }
}
