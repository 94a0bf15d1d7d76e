//! Kernel-weighted sums over covering grids.
//!
//! `V(y) = sum_t f^2[(x_t + y)/h]` and `S(y) = sum_t u_t f[(x_t + y)/h]`
//! are evaluated through a sorted copy of the path: for each grid point only
//! the contiguous run of sorted values with `|x_t + y| <= R h` is visited,
//! where `R` is the kernel's (effective) support radius. Terms in a run are
//! accumulated with compensated summation in ascending `(x_t, t)` order, so
//! every grid value is independent of evaluation order and thread count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::stats::CompensatedSum;

/// `h(n) = c n^{-gamma} (log n)^{log_exponent}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRule {
    pub c: f64,
    pub gamma: f64,
    pub log_exponent: f64,
}

impl BandwidthRule {
    pub fn power(gamma: f64) -> Self {
        BandwidthRule { c: 1.0, gamma, log_exponent: 0.0 }
    }

    pub fn h(&self, n: usize) -> f64 {
        let n = n as f64;
        self.c * n.powf(-self.gamma) * n.ln().powf(self.log_exponent)
    }

    /// Checks `h -> 0` and `n h -> inf` along an ascending n-grid: `h` must
    /// be non-increasing and `n h` increasing from point to point.
    pub fn check(&self, n_grid: &[usize]) -> Result<()> {
        if !(self.c > 0.0) || !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid(format!(
                "bandwidth rule needs c > 0 and gamma in (0, 1) (got c = {}, gamma = {})",
                self.c, self.gamma
            )));
        }
        for w in n_grid.windows(2) {
            let (h0, h1) = (self.h(w[0]), self.h(w[1]));
            if h1 > h0 || w[1] as f64 * h1 <= w[0] as f64 * h0 {
                return Err(Error::invalid(format!(
                    "bandwidth rule violates h -> 0, nh -> inf between n = {} and n = {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }
}

/// Normalization `c_n = a(n) h` with `a(n) = n^beta` (slowly varying factor
/// fixed to 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case")]
pub enum NormalizationProfile {
    /// `a(n) = n`.
    Stationary,
    /// `a(n) = sqrt(n)`.
    RandomWalk,
    Generic { beta: f64 },
}

impl NormalizationProfile {
    pub fn beta(&self) -> f64 {
        match *self {
            NormalizationProfile::Stationary => 1.0,
            NormalizationProfile::RandomWalk => 0.5,
            NormalizationProfile::Generic { beta } => beta,
        }
    }

    pub fn a_of_n(&self, n: usize) -> f64 {
        (n as f64).powf(self.beta())
    }

    pub fn c_n(&self, n: usize, h: f64) -> f64 {
        self.a_of_n(n) * h
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.beta();
        if b > 0.0 && b <= 1.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!("beta must lie in (0, 1] (got {b})")))
        }
    }
}

/// Half-width `b_n` of the evaluation range `|x| <= b_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "range", rename_all = "kebab-case")]
pub enum RangeRule {
    Fixed { b: f64 },
    /// `tau sqrt(n) n^{-kappa}`.
    SqrtScaled { tau: f64, kappa: f64 },
    /// `n^m`.
    Power { m: f64 },
}

impl RangeRule {
    pub fn b_n(&self, n: usize) -> f64 {
        let nf = n as f64;
        match *self {
            RangeRule::Fixed { b } => b,
            RangeRule::SqrtScaled { tau, kappa } => tau * nf.sqrt() * nf.powf(-kappa),
            RangeRule::Power { m } => nf.powf(m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "spacing", rename_all = "kebab-case")]
pub enum SpacingRule {
    /// `h sqrt(c_n log n) / n`, capped above by `h / 10`.
    ProofMatched,
    Explicit { delta: f64 },
    /// `fraction * h`.
    BandwidthFraction { fraction: f64 },
}

impl SpacingRule {
    pub fn spacing(&self, n: usize, h: f64, c_n: f64) -> f64 {
        match *self {
            SpacingRule::ProofMatched => {
                let nf = n as f64;
                (h * (c_n * nf.ln()).sqrt() / nf).min(h / 10.0)
            }
            SpacingRule::Explicit { delta } => delta,
            SpacingRule::BandwidthFraction { fraction } => fraction * h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub range: RangeRule,
    pub spacing: SpacingRule,
}

impl GridSpec {
    pub fn build(&self, n: usize, h: f64, c_n: f64) -> Result<Grid> {
        let b = self.range.b_n(n);
        let d = self.spacing.spacing(n, h, c_n);
        Grid::covering(b, d)
    }
}

/// Uniform grid `y_j = start + j step`, `j = 0..len`. Large grids are never
/// materialized unless asked for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    start: f64,
    step: f64,
    len: usize,
}

impl Grid {
    /// Smallest uniform grid on `[-b, b]` (endpoints included) whose gap
    /// does not exceed `max_spacing`.
    pub fn covering(b: f64, max_spacing: f64) -> Result<Grid> {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::invalid(format!("grid half-width must be finite and >= 0 (got {b})")));
        }
        if !(max_spacing > 0.0) || !max_spacing.is_finite() {
            return Err(Error::invalid(format!("grid spacing must be positive (got {max_spacing})")));
        }
        if b == 0.0 {
            return Ok(Grid { start: 0.0, step: max_spacing, len: 1 });
        }
        let cells = (2.0 * b / max_spacing).ceil();
        if cells > 4e9 {
            return Err(Error::invalid("grid would exceed 4e9 points"));
        }
        let cells = cells.max(1.0) as usize;
        Ok(Grid { start: -b, step: 2.0 * b / cells as f64, len: cells + 1 })
    }

    /// Grid from explicit uniform parameters.
    pub fn uniform(start: f64, step: f64, len: usize) -> Result<Grid> {
        if len == 0 || !(step > 0.0) || !start.is_finite() {
            return Err(Error::invalid("uniform grid needs len >= 1, step > 0 and finite start"));
        }
        Ok(Grid { start, step, len })
    }

    pub fn single(point: f64) -> Grid {
        Grid { start: point, step: 1.0, len: 1 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    #[inline]
    pub fn point(&self, j: usize) -> f64 {
        self.start + j as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|j| self.point(j)).collect()
    }

    pub fn half_width(&self) -> f64 {
        self.point(0).abs().max(self.point(self.len - 1).abs())
    }

    /// Every other point; used to probe monotonicity of sup/inf.
    pub fn coarsened(&self) -> Grid {
        Grid { start: self.start, step: 2.0 * self.step, len: self.len.div_ceil(2) }
    }

    /// Twice as fine, same endpoints.
    pub fn refined(&self) -> Grid {
        Grid { start: self.start, step: self.step / 2.0, len: 2 * self.len - 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Kernel,
    Squared,
}

/// Sorted-path evaluator for `sum_t w_t T(f)[(x_t + y)/h]`.
#[derive(Debug, Clone)]
pub struct KernelSums {
    kernel: Kernel,
    h: f64,
    transform: Transform,
    xs: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl KernelSums {
    pub fn new(
        values: &[f64],
        weights: Option<&[f64]>,
        kernel: Kernel,
        h: f64,
        transform: Transform,
    ) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid(format!("bandwidth h must be positive and finite (got {h})")));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("path contains non-finite values"));
        }
        if let Some(w) = weights {
            if w.len() != values.len() {
                return Err(Error::invalid(format!(
                    "weights have length {} but the path has length {}",
                    w.len(),
                    values.len()
                )));
            }
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        // Stable: equal values keep ascending t.
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let xs = order.iter().map(|&i| values[i]).collect();
        let weights = weights.map(|w| order.iter().map(|&i| w[i]).collect());
        Ok(KernelSums { kernel, h, transform, xs, weights })
    }

    /// `f^2` sums (the conditional-variance functional).
    pub fn squared(values: &[f64], kernel: Kernel, h: f64) -> Result<Self> {
        Self::new(values, None, kernel, h, Transform::Squared)
    }

    /// `sum_t w_t f[(x_t + y)/h]`.
    pub fn weighted(values: &[f64], weights: &[f64], kernel: Kernel, h: f64) -> Result<Self> {
        Self::new(values, Some(weights), kernel, h, Transform::Kernel)
    }

    /// `sum_t f[(x_t + y)/h]` (unit weights).
    pub fn plain(values: &[f64], kernel: Kernel, h: f64) -> Result<Self> {
        Self::new(values, None, kernel, h, Transform::Kernel)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    fn reach(&self) -> f64 {
        self.kernel.effective_radius() * self.h
    }

    /// Sorted index range `[lo, hi)` of observations within reach of `shift`.
    #[inline]
    fn window(&self, shift: f64) -> (usize, usize) {
        let r = self.reach();
        let (a, b) = (-shift - r, -shift + r);
        let lo = self.xs.partition_point(|&x| x < a);
        let hi = lo + self.xs[lo..].partition_point(|&x| x <= b);
        (lo, hi)
    }

    #[inline]
    fn term(&self, x: f64, shift: f64) -> f64 {
        let s = (x + shift) / self.h;
        match self.transform {
            Transform::Kernel => self.kernel.eval(s),
            Transform::Squared => self.kernel.eval_squared(s),
        }
    }

    /// Value at a single shift `y`.
    pub fn at(&self, shift: f64) -> f64 {
        let (lo, hi) = self.window(shift);
        let mut acc = CompensatedSum::new();
        match &self.weights {
            Some(w) => (lo..hi).for_each(|i| acc.add(w[i] * self.term(self.xs[i], shift))),
            None => (lo..hi).for_each(|i| acc.add(self.term(self.xs[i], shift))),
        }
        acc.value()
    }

    /// Number of observations contributing at `shift`.
    pub fn window_count(&self, shift: f64) -> usize {
        let (lo, hi) = self.window(shift);
        hi - lo
    }

    pub fn over(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len()).map(|j| self.at(grid.point(j))).collect()
    }

    pub fn over_points(&self, points: &[f64]) -> Vec<f64> {
        points.iter().map(|&y| self.at(y)).collect()
    }

    /// Index range of grid points whose window can be nonempty; all values
    /// outside it are exactly zero.
    pub fn active_range(&self, grid: &Grid) -> (usize, usize) {
        if self.xs.is_empty() {
            return (0, 0);
        }
        let r = self.reach();
        let lo_y = -self.xs[self.xs.len() - 1] - r;
        let hi_y = -self.xs[0] + r;
        let to_index = |y: f64| (y - grid.point(0)) / grid.step();
        let j0 = to_index(lo_y).floor() - 1.0;
        let j1 = to_index(hi_y).ceil() + 2.0;
        let clamp = |v: f64| v.clamp(0.0, grid.len() as f64) as usize;
        (clamp(j0), clamp(j1))
    }

    /// `sup_stat(self.over(grid))` without visiting points that are
    /// provably zero.
    pub fn sup_abs(&self, grid: &Grid) -> Extremum {
        let (j0, j1) = self.active_range(grid);
        let mut best = Extremum { value: 0.0, index: 0 };
        for j in j0..j1 {
            let v = self.at(grid.point(j)).abs();
            if v > best.value {
                best = Extremum { value: v, index: j };
            }
        }
        best
    }

    /// `inf_stat(self.over(grid))` for nonnegative sums, skipping points
    /// that are provably zero.
    pub fn inf(&self, grid: &Grid) -> Extremum {
        let (j0, j1) = self.active_range(grid);
        if j0 > 0 {
            return Extremum { value: 0.0, index: 0 };
        }
        let mut best: Option<Extremum> = None;
        for j in j0..j1 {
            let v = self.at(grid.point(j));
            if best.is_none_or(|b| v < b.value) {
                best = Some(Extremum { value: v, index: j });
                if v == 0.0 {
                    return best.unwrap();
                }
            }
        }
        if j1 < grid.len() {
            return Extremum { value: 0.0, index: j1 };
        }
        best.unwrap_or(Extremum { value: 0.0, index: 0 })
    }
}

/// `V(y_j) = sum_t f^2[(x_t + y_j)/h]` at every grid point.
pub fn variance_sum(path: &[f64], kernel: &Kernel, h: f64, grid: &Grid) -> Result<Vec<f64>> {
    require_grid(grid)?;
    Ok(KernelSums::squared(path, *kernel, h)?.over(grid))
}

/// `S(y_j) = sum_t u_t f[(x_t + y_j)/h]` at every grid point.
pub fn martingale_sum(path: &[f64], u: &[f64], kernel: &Kernel, h: f64, grid: &Grid) -> Result<Vec<f64>> {
    require_grid(grid)?;
    Ok(KernelSums::weighted(path, u, *kernel, h)?.over(grid))
}

fn require_grid(grid: &Grid) -> Result<()> {
    if grid.is_empty() {
        Err(Error::invalid("grid is empty"))
    } else {
        Ok(())
    }
}

/// Extreme value over a grid and the (smallest) grid index attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremum {
    pub value: f64,
    pub index: usize,
}

/// `max_j |v_j|`, ties to the smallest index.
pub fn sup_stat(values: &[f64]) -> Result<Extremum> {
    let mut it = values.iter().enumerate();
    let (_, first) = it.next().ok_or_else(|| Error::invalid("sup_stat of an empty sequence"))?;
    let mut best = Extremum { value: first.abs(), index: 0 };
    for (j, v) in it {
        if v.abs() > best.value {
            best = Extremum { value: v.abs(), index: j };
        }
    }
    Ok(best)
}

/// `min_j v_j` for nonnegative (variance) sums, ties to the smallest index.
pub fn inf_stat(values: &[f64]) -> Result<Extremum> {
    if values.is_empty() {
        return Err(Error::invalid("inf_stat of an empty sequence"));
    }
    if let Some(v) = values.iter().find(|v| **v < 0.0 || v.is_nan()) {
        return Err(Error::invalid(format!(
            "inf_stat expects nonnegative variance sums, found {v}"
        )));
    }
    let mut best = Extremum { value: values[0], index: 0 };
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v < best.value {
            best = Extremum { value: v, index: j };
        }
    }
    Ok(best)
}

/// Sup/inf statistics rescaled by their theoretical orders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizedRatios {
    pub c_n: f64,
    /// `sup|S| / sqrt(c_n log n)`.
    pub martingale: f64,
    /// `sup V / c_n`.
    pub variance_upper: f64,
    /// `a(n) h / inf V`; `+inf` when `inf V = 0`.
    pub variance_lower_reciprocal: f64,
    pub lower_degenerate: bool,
}

pub fn normalized_ratios(
    sup_s: f64,
    sup_v: f64,
    inf_v: f64,
    n: usize,
    h: f64,
    profile: &NormalizationProfile,
) -> Result<NormalizedRatios> {
    if n < 2 {
        return Err(Error::invalid("normalized ratios need n >= 2"));
    }
    let c_n = profile.c_n(n, h);
    let lower_degenerate = inf_v == 0.0;
    Ok(NormalizedRatios {
        c_n,
        martingale: sup_s / (c_n * (n as f64).ln()).sqrt(),
        variance_upper: sup_v / c_n,
        variance_lower_reciprocal: if lower_degenerate { f64::INFINITY } else { c_n / inf_v },
        lower_degenerate,
    })
}

/// Empirical version of the whole-line extension conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailReport {
    /// `b_n^{-k0} sum_t |x_t|^{k0}`.
    pub statistic: f64,
    /// `statistic / sqrt(c_n log n)`.
    pub ratio: f64,
    /// `n sup_{|x| > b_n/2} |f(x/h)|`.
    pub companion: f64,
    pub companion_ratio: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn tail_condition_check(
    path: &[f64],
    b_n: f64,
    k0: f64,
    c_n: f64,
    n: usize,
    kernel: &Kernel,
    h: f64,
) -> Result<TailReport> {
    if !(k0 > 0.0) {
        return Err(Error::invalid("k0 must be positive"));
    }
    if !(b_n > 0.0) || !(h > 0.0) {
        return Err(Error::invalid("b_n and h must be positive"));
    }
    let mut acc = CompensatedSum::new();
    path.iter().for_each(|x| acc.add(x.abs().powf(k0)));
    let statistic = acc.value() / b_n.powf(k0);
    let scale = (c_n * (n as f64).ln()).sqrt();
    // Catalog kernels decrease in |s|, so the sup over |x| > b_n/2 is the
    // boundary value (exactly zero past a compact support).
    let edge = b_n / (2.0 * h);
    let companion = n as f64 * kernel.eval(edge).abs();
    Ok(TailReport { statistic, ratio: statistic / scale, companion, companion_ratio: companion / scale })
}

/// Evaluation of `n c_n^{-p} (log n)^{p-1}` along an n-grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRateReport {
    pub p: u32,
    pub values: Vec<(usize, f64)>,
    pub tail_non_increasing: bool,
    pub bounded_by_ten_times_first: bool,
}

impl MomentRateReport {
    pub fn passes(&self) -> bool {
        self.tail_non_increasing || self.bounded_by_ten_times_first
    }
}

/// The grid's second half counts as the tail.
pub fn check_assumption_2_4(
    rule: &BandwidthRule,
    profile: &NormalizationProfile,
    p: u32,
    n_grid: &[usize],
) -> Result<MomentRateReport> {
    if p < 1 {
        return Err(Error::invalid("p must be at least 1"));
    }
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| w[1] <= w[0]) || n_grid[0] < 2 {
        return Err(Error::invalid("n-grid must be ascending with at least two values >= 2"));
    }
    let values: Vec<(usize, f64)> = n_grid
        .iter()
        .map(|&n| {
            let c_n = profile.c_n(n, rule.h(n));
            let ln = (n as f64).ln();
            (n, n as f64 * c_n.powi(-(p as i32)) * ln.powi(p as i32 - 1))
        })
        .collect();
    let tail = &values[values.len() / 2..];
    let tail_non_increasing = tail.windows(2).all(|w| w[1].1 <= w[0].1);
    let first = values[0].1;
    let bounded_by_ten_times_first = values.iter().all(|&(_, v)| v <= 10.0 * first);
    Ok(MomentRateReport { p, values, tail_non_increasing, bounded_by_ten_times_first })
}
