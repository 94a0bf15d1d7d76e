//! Regeneration records, beta-regularity estimates, block functionals and
//! the local-time comparison for random walks.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::processes::{InnovationDist, Path};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{ks_two_sample, ols, CompensatedSum, KsResult};
use crate::sums::KernelSums;

/// Split-chain indicators `Y_1..Y_n` and regeneration times
/// `rho_k = min{i > rho_{k-1} : Y_i = 1}` (1-based, `rho_0 = 0`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegenRecord {
    times: Vec<usize>,
    indicators: Vec<bool>,
}

impl RegenRecord {
    pub fn from_indicators(indicators: Vec<bool>) -> Self {
        let times = indicators
            .iter()
            .enumerate()
            .filter_map(|(i, &y)| y.then_some(i + 1))
            .collect();
        RegenRecord { times, indicators }
    }

    /// Builds a record for a horizon `n` from explicit regeneration times.
    pub fn from_times(times: Vec<usize>, n: usize) -> Result<Self> {
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("regeneration times must be strictly increasing"));
        }
        if times.first().is_some_and(|&t| t == 0) || times.last().is_some_and(|&t| t > n) {
            return Err(Error::invalid("regeneration times must lie in 1..=n"));
        }
        let mut indicators = vec![false; n];
        times.iter().for_each(|&t| indicators[t - 1] = true);
        Ok(RegenRecord { times, indicators })
    }

    /// Horizon `n`.
    pub fn n(&self) -> usize {
        self.indicators.len()
    }

    pub fn times(&self) -> &[usize] {
        &self.times
    }

    pub fn indicators(&self) -> &[bool] {
        &self.indicators
    }

    /// `N(n) = max{k : rho_k <= n}`.
    pub fn count(&self) -> usize {
        self.times.len()
    }

    /// `N(m)` for `m <= n`.
    pub fn count_up_to(&self, m: usize) -> usize {
        self.times.partition_point(|&t| t <= m)
    }

    /// 0-based index ranges of the complete blocks
    /// `(x_{rho_{j-1}+1}, ..., x_{rho_j})`, followed by the (possibly empty)
    /// partial tail after the last regeneration.
    pub fn blocks(&self) -> (Vec<std::ops::Range<usize>>, std::ops::Range<usize>) {
        let mut start = 0usize;
        let complete = self
            .times
            .iter()
            .map(|&t| {
                let r = start..t;
                start = t;
                r
            })
            .collect();
        (complete, start..self.n())
    }
}

/// Zero-level crossings of a path, used as a regeneration proxy for the
/// random walk (their count grows like `sqrt(n)`).
pub fn crossing_record(values: &[f64]) -> RegenRecord {
    let mut ind = vec![false; values.len()];
    for t in 1..values.len() {
        let (a, b) = (values[t - 1], values[t]);
        ind[t] = (a < 0.0) != (b < 0.0);
    }
    RegenRecord::from_indicators(ind)
}

/// Estimated regularity index `beta` with `a(n) = n^beta_hat`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarrisProfile {
    pub beta_hat: f64,
    pub beta_se: f64,
    pub intercept: f64,
}

impl HarrisProfile {
    pub fn a_of_n(&self, n: usize) -> f64 {
        (n as f64).powf(self.beta_hat)
    }

    /// `0 < beta_hat <= 1 + 3 se`.
    pub fn is_consistent(&self) -> bool {
        self.beta_hat > 0.0 && self.beta_hat <= 1.0 + 3.0 * self.beta_se
    }
}

/// Geometric checkpoints `n 2^{-i}`, `i = 6..=0`, ascending.
pub fn default_checkpoints(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..=6).rev().map(|i| n >> i).filter(|&m| m > 0).collect();
    v.dedup();
    v
}

/// Least-squares slope of `log N` against `log n`.
pub fn fit_beta(checkpoints: &[usize], counts: &[f64]) -> Result<HarrisProfile> {
    if checkpoints.len() < 2 || checkpoints.len() != counts.len() {
        return Err(Error::NotEnoughData("need at least two checkpoints with counts".into()));
    }
    if counts.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::NotEnoughData("a checkpoint has no regenerations".into()));
    }
    let xs: Vec<f64> = checkpoints.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|c| c.ln()).collect();
    let fit = ols(&xs, &ys)?;
    Ok(HarrisProfile { beta_hat: fit.slope, beta_se: fit.slope_se, intercept: fit.intercept })
}

const MIN_REGENERATIONS: usize = 10;

pub fn estimate_beta(record: &RegenRecord, checkpoints: &[usize]) -> Result<HarrisProfile> {
    check_checkpoints(checkpoints, record.n())?;
    let last = *checkpoints.last().unwrap();
    if record.count_up_to(last) < MIN_REGENERATIONS {
        return Err(Error::NotEnoughData(format!(
            "only {} regenerations up to n = {last}; need at least {MIN_REGENERATIONS}",
            record.count_up_to(last)
        )));
    }
    let counts: Vec<f64> = checkpoints.iter().map(|&m| record.count_up_to(m) as f64).collect();
    fit_beta(checkpoints, &counts)
}

/// Fits on the mean regeneration count across independent replicates,
/// which is far less noisy than a single path when `beta < 1`.
pub fn estimate_beta_pooled(records: &[RegenRecord], checkpoints: &[usize]) -> Result<HarrisProfile> {
    if records.is_empty() {
        return Err(Error::NotEnoughData("no records".into()));
    }
    let n = records.iter().map(|r| r.n()).min().unwrap();
    check_checkpoints(checkpoints, n)?;
    let counts: Vec<f64> = checkpoints
        .iter()
        .map(|&m| records.iter().map(|r| r.count_up_to(m) as f64).sum::<f64>() / records.len() as f64)
        .collect();
    if *counts.last().unwrap() < MIN_REGENERATIONS as f64 {
        return Err(Error::NotEnoughData("mean regeneration count below 10".into()));
    }
    fit_beta(checkpoints, &counts)
}

fn check_checkpoints(checkpoints: &[usize], n: usize) -> Result<()> {
    if checkpoints.len() < 2 || checkpoints.windows(2).any(|w| w[1] <= w[0]) || checkpoints[0] == 0 {
        return Err(Error::invalid("checkpoints must be ascending, positive and at least two"));
    }
    if *checkpoints.last().unwrap() > n {
        return Err(Error::invalid("checkpoint beyond the record horizon"));
    }
    Ok(())
}

/// Per-block sums `Z_j(x) = sum_{k in block j} f^2[(x_k + x)/h]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockFunctionals {
    pub complete: Vec<f64>,
    /// Partial block after the last regeneration.
    pub tail: f64,
}

impl BlockFunctionals {
    /// Sum over complete blocks plus the tail.
    pub fn total(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        self.complete.iter().for_each(|&z| acc.add(z));
        acc.add(self.tail);
        acc.value()
    }
}

pub fn block_functionals(path: &Path, record: &RegenRecord, kernel: &Kernel, h: f64, x: f64) -> Result<BlockFunctionals> {
    if record.n() != path.len() {
        return Err(Error::invalid(format!(
            "record horizon {} does not match path length {}",
            record.n(),
            path.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::invalid("bandwidth must be positive"));
    }
    let block_sum = |r: std::ops::Range<usize>| {
        let mut acc = CompensatedSum::new();
        path.values[r].iter().for_each(|&v| acc.add(kernel.eval_squared((v + x) / h)));
        acc.value()
    };
    let (complete, tail) = record.blocks();
    Ok(BlockFunctionals { complete: complete.into_iter().map(block_sum).collect(), tail: block_sum(tail) })
}

/// Values below this (in local-time units) count as "near zero".
pub const NEAR_ZERO_THRESHOLD: f64 = 0.05;
pub const MIN_LOCAL_TIME_REPLICATES: usize = 100;
/// Fine-walk length relative to `n` for the Brownian local time oracle.
pub const ORACLE_REFINEMENT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalTimeReport {
    pub n: usize,
    pub h: f64,
    /// Level `y_n / sqrt(n)` the statistic is evaluated at.
    pub level: f64,
    /// `V_n(y_n) / (sqrt(n) h int f^2)` per replicate.
    pub statistics: Vec<f64>,
    /// Occupation-density estimates of `L_W(1, level)` from the fine walk.
    pub oracle: Vec<f64>,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub near_zero_fraction: f64,
    pub oracle_near_zero_fraction: f64,
    /// `sqrt(n) h < 10`: the limit regime has likely not kicked in.
    pub small_window_warning: bool,
}

impl LocalTimeReport {
    pub fn ks(&self) -> KsResult {
        KsResult { statistic: self.ks_statistic, p_value: self.ks_p_value }
    }
}

pub fn near_zero_fraction(values: &[f64], threshold: f64) -> f64 {
    values.iter().filter(|&&v| v < threshold).count() as f64 / values.len() as f64
}

/// Occupation-density estimate of Brownian local time at `level` over
/// `[0, 1]` from one `steps`-step Gaussian walk:
/// `#{t : |S_t / sqrt(steps) - level| < eps} / (2 eps steps)`.
pub fn brownian_local_time_oracle(steps: usize, level: f64, seed: u64) -> f64 {
    let root = (steps as f64).sqrt();
    let eps = (0.01f64).max(2.0 / root);
    let (lo, hi) = ((level - eps) * root, (level + eps) * root);
    let mut rng = rng_from_seed(seed);
    let mut s = 0.0;
    let mut hits = 0usize;
    for _ in 0..steps {
        s += InnovationDist::Gaussian.sample(&mut rng);
        if s > lo && s < hi {
            hits += 1;
        }
    }
    hits as f64 / (2.0 * eps * steps as f64)
}

/// Compares the normalized kernel occupation sums of Gaussian random
/// walks at level 0 with the local-time oracle.
pub fn local_time_comparison(n: usize, h: f64, kernel: &Kernel, replicates: usize, seed: u64) -> Result<LocalTimeReport> {
    local_time_comparison_at(n, h, kernel, replicates, seed, 0.0)
}

/// As [`local_time_comparison`] but at the shifted level
/// `y_n = level * sqrt(n)`. The oracle targets `L_W(1, -level)`, the level
/// visited by `x_t + y_n = 0`.
pub fn local_time_comparison_at(
    n: usize,
    h: f64,
    kernel: &Kernel,
    replicates: usize,
    seed: u64,
    level: f64,
) -> Result<LocalTimeReport> {
    if replicates < MIN_LOCAL_TIME_REPLICATES {
        return Err(Error::NotEnoughData(format!(
            "local time comparison needs at least {MIN_LOCAL_TIME_REPLICATES} replicates (got {replicates})"
        )));
    }
    if n < 2 || !(h > 0.0) {
        return Err(Error::invalid("need n >= 2 and h > 0"));
    }
    let root = (n as f64).sqrt();
    let y_n = level * root;
    let norm = root * h * kernel.square_integral;
    let statistics: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let path = crate::processes::gen_random_walk(n, InnovationDist::Gaussian, derive_seed(seed, &[0, r as u64]))?;
            Ok(KernelSums::squared(&path.values, *kernel, h)?.at(y_n) / norm)
        })
        .collect::<Result<_>>()?;
    let oracle: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| brownian_local_time_oracle(ORACLE_REFINEMENT * n, -level, derive_seed(seed, &[1, r as u64])))
        .collect();
    let ks = ks_two_sample(&statistics, &oracle)?;
    Ok(LocalTimeReport {
        n,
        h,
        level,
        near_zero_fraction: near_zero_fraction(&statistics, NEAR_ZERO_THRESHOLD),
        oracle_near_zero_fraction: near_zero_fraction(&oracle, NEAR_ZERO_THRESHOLD),
        statistics,
        oracle,
        ks_statistic: ks.statistic,
        ks_p_value: ks.p_value,
        small_window_warning: root * h < 10.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelId;
    use crate::processes::{gen_random_walk, gen_split_chain, GaussianAr1Chain};
    use crate::sums::{variance_sum, Grid};

    #[test]
    fn record_invariants() {
        let rec = RegenRecord::from_indicators(vec![false, true, false, true, true, false]);
        assert_eq!(rec.times(), &[2, 4, 5]);
        assert_eq!(rec.count(), 3);
        assert_eq!(rec.count_up_to(3), 1);
        assert_eq!(rec.count_up_to(0), 0);
        let (blocks, tail) = rec.blocks();
        assert_eq!(blocks, vec![0..2, 2..4, 4..5]);
        assert_eq!(tail, 5..6);
        assert!(RegenRecord::from_times(vec![3, 2], 5).is_err());
        assert!(RegenRecord::from_times(vec![0, 2], 5).is_err());
        assert!(RegenRecord::from_times(vec![6], 5).is_err());
        assert_eq!(RegenRecord::from_times(vec![2, 4, 5], 6).unwrap(), rec);
    }

    #[test]
    fn squares_give_half() {
        let n = 1usize << 30;
        let times: Vec<usize> = (1..).map(|k: usize| k * k).take_while(|&t| t <= n).collect();
        let rec = RegenRecord::from_times(times, n).unwrap();
        let prof = estimate_beta(&rec, &default_checkpoints(n)).unwrap();
        assert!((prof.beta_hat - 0.5).abs() < 1e-3, "{prof:?}");
    }

    #[test]
    fn too_few_regenerations() {
        let rec = RegenRecord::from_times(vec![5, 50], 1000).unwrap();
        assert!(matches!(estimate_beta(&rec, &default_checkpoints(1000)), Err(Error::NotEnoughData(_))));
    }

    #[test]
    fn beta_fit_is_invariant_to_rescaled_checkpoints() {
        let cps = [100usize, 200, 400, 800];
        let counts = [11.0, 14.0, 21.0, 29.0];
        let a = fit_beta(&cps, &counts).unwrap();
        let scaled: Vec<usize> = cps.iter().map(|c| c * 8).collect();
        let b = fit_beta(&scaled, &counts).unwrap();
        assert!((a.beta_hat - b.beta_hat).abs() < 1e-12);
        assert!((a.beta_se - b.beta_se).abs() < 1e-12);
    }

    #[test]
    fn positive_recurrent_chain_has_beta_one() {
        let chain = GaussianAr1Chain::new(0.5, 1.0).unwrap();
        let n = 1usize << 18;
        let (_, rec) = gen_split_chain(n, &chain, 99).unwrap();
        let prof = estimate_beta(&rec, &default_checkpoints(n)).unwrap();
        assert!((prof.beta_hat - 1.0).abs() < 0.1, "{prof:?}");
        assert!(prof.is_consistent());
        // N(n) is non-decreasing in n.
        let counts: Vec<usize> = (1..=n).step_by(997).map(|m| rec.count_up_to(m)).collect();
        assert!(counts.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn block_sums_reconstruct_variance_sum() {
        let chain = GaussianAr1Chain::new(0.5, 1.0).unwrap();
        let (path, rec) = gen_split_chain(5000, &chain, 4).unwrap();
        let k = KernelId::Epanechnikov.kernel();
        for &x in &[0.0, 0.7, -1.9] {
            let blocks = block_functionals(&path, &rec, &k, 0.3, x).unwrap();
            let v = variance_sum(&path.values, &k, 0.3, &Grid::single(x)).unwrap()[0];
            assert!((blocks.total() - v).abs() <= 1e-12 * v.max(1.0));
        }
        // Blocks partition 0..n without gaps.
        let (blocks, tail) = rec.blocks();
        let mut next = 0;
        for b in blocks.iter().chain(std::iter::once(&tail)) {
            assert_eq!(b.start, next);
            next = b.end;
        }
        assert_eq!(next, path.len());
        let short = RegenRecord::from_indicators(vec![true; 10]);
        assert!(block_functionals(&path, &short, &k, 0.3, 0.0).is_err());
    }

    #[test]
    fn unit_blocks() {
        let path = gen_random_walk(20, InnovationDist::Gaussian, 2).unwrap();
        let rec = RegenRecord::from_indicators(vec![true; 20]);
        let k = KernelId::Quartic.kernel();
        let z = block_functionals(&path, &rec, &k, 2.0, 0.5).unwrap();
        for (zj, x) in z.complete.iter().zip(&path.values) {
            assert_eq!(*zj, k.eval_squared((x + 0.5) / 2.0));
        }
        assert_eq!(z.tail, 0.0);
    }

    #[test]
    fn saturated_bandwidth() {
        // h much wider than the walk's range: f^2 is flat near 0.
        let n = 400;
        let path = gen_random_walk(n, InnovationDist::Gaussian, 5).unwrap();
        let k = KernelId::Epanechnikov.kernel();
        let v = variance_sum(&path.values, &k, 1e5, &Grid::single(0.0)).unwrap()[0];
        assert!((v / (n as f64 * k.eval_squared(0.0)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn local_time_needs_replicates() {
        let k = KernelId::Epanechnikov.kernel();
        assert!(matches!(local_time_comparison(100, 0.3, &k, 50, 1), Err(Error::NotEnoughData(_))));
        let rep = local_time_comparison(400, 0.3, &k, 100, 1).unwrap();
        assert!(rep.small_window_warning);
        assert_eq!(rep.statistics.len(), 100);
    }

    #[test]
    fn crossings_of_known_path() {
        let rec = crossing_record(&[1.0, -1.0, -2.0, 0.5, 0.7, -0.1]);
        assert_eq!(rec.times(), &[2, 4, 6]);
    }
}
