//! Brute-force oracles shared by the integration tests. Kernels are
//! re-derived from their closed forms here rather than taken from the
//! library.

#![allow(dead_code)]

use unirate_core::KernelId;

pub fn kernel(id: KernelId, s: f64) -> f64 {
    let a = s.abs();
    match id {
        KernelId::Epanechnikov if a <= 1.0 => 0.75 * (1.0 - s * s),
        KernelId::Triangular if a <= 1.0 => 1.0 - a,
        KernelId::Quartic if a <= 1.0 => 15.0 / 16.0 * (1.0 - s * s).powi(2),
        KernelId::Gaussian => (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt(),
        _ => 0.0,
    }
}

/// `(sum_t w_t f((x_t + y)/h), sum_t |w_t f((x_t + y)/h)|)` with `f = K`
/// or `K^2`, by plain double loop.
pub fn weighted_sum(x: &[f64], w: Option<&[f64]>, id: KernelId, h: f64, y: f64, squared: bool) -> (f64, f64) {
    let mut s = 0.0;
    let mut a = 0.0;
    for (t, &xt) in x.iter().enumerate() {
        let k = kernel(id, (xt + y) / h);
        let f = if squared { k * k } else { k };
        let term = w.map_or(1.0, |w| w[t]) * f;
        s += term;
        a += term.abs();
    }
    (s, a)
}

/// Naive Nadaraya–Watson: `(estimate or None, scale)` where the scale is
/// the kernel-weighted mean of `|y_t|`.
pub fn nw(x: &[f64], y: &[f64], id: KernelId, h: f64, p: f64) -> (Option<f64>, f64, f64) {
    let (mut num, mut den, mut abs) = (0.0, 0.0, 0.0);
    for (&xt, &yt) in x.iter().zip(y) {
        let k = kernel(id, (xt - p) / h) / h;
        num += yt * k;
        den += k;
        abs += yt.abs() * k;
    }
    let defined = den >= f64::EPSILON * x.len() as f64 && den > 0.0;
    (defined.then(|| num / den), if den > 0.0 { abs / den } else { 0.0 }, den)
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}
