//! Monte Carlo harness: sweep `n`, replicate with derived seeds, compute a
//! normalized statistic per replicate and fit log-log rates on medians.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{check_assumption_2_2, KernelId};
use crate::processes::{
    contraction_diagnostics, gen_errors, Coefficients, ErrorSpec, InnovationDist, ProcessSpec,
    VolatilityMap, DEFAULT_BURN_IN, DEFAULT_TAIL_TOL,
};
use crate::regression::{nw_fit, uniform_error, RegressionFunction};
use crate::rng::derive_seed;
use crate::stats::{ols, quantile};
use crate::sums::{
    check_assumption_2_4, BandwidthRule, GridSpec, KernelSums, NormalizationProfile, RangeRule,
    SpacingRule,
};

/// Fewer replicates per `n` than this and the JSON summary omits the fit.
pub const MIN_FIT_REPLICATES: usize = 50;

/// n-grid on which the moment-rate condition is evaluated.
pub fn moment_rate_grid() -> Vec<usize> {
    pow2_grid(10, 20)
}

pub fn pow2_grid(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|k| 1usize << k).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// `sup |S_n| / sqrt(c_n log n)`.
    SupMartingale,
    /// `sup V_n / c_n`.
    SupVariance,
    /// `c_n / inf V_n`.
    InfVarianceReciprocal,
    /// `sup |m_hat - m|`.
    NwSupError,
}

impl Target {
    pub const ALL: [Target; 4] =
        [Target::SupMartingale, Target::SupVariance, Target::InfVarianceReciprocal, Target::NwSupError];

    /// Name of the normalized statistic.
    pub fn name(&self) -> &'static str {
        match self {
            Target::SupMartingale => "sup_s_ratio",
            Target::SupVariance => "sup_v_ratio",
            Target::InfVarianceReciprocal => "inf_v_reciprocal",
            Target::NwSupError => "nw_sup_error",
        }
    }

    /// Name of the unnormalized statistic.
    pub fn raw_name(&self) -> &'static str {
        match self {
            Target::SupMartingale => "sup_s",
            Target::SupVariance => "sup_v",
            Target::InfVarianceReciprocal => "inf_v",
            Target::NwSupError => "nw_sup_error_raw",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let t = match key.as_str() {
            "sup-martingale" | "sup-s" | "sup-s-ratio" => Target::SupMartingale,
            "sup-variance" | "sup-v" | "sup-v-ratio" => Target::SupVariance,
            "inf-variance" | "inf-v" | "inf-v-reciprocal" => Target::InfVarianceReciprocal,
            "nw" | "nw-sup-error" => Target::NwSupError,
            _ => {
                return Err(Error::invalid(format!(
                    "unknown target `{s}` (expected sup-s, sup-v, inf-v or nw)"
                )))
            }
        };
        Ok(t)
    }

    fn uses_errors(&self) -> bool {
        matches!(self, Target::SupMartingale | Target::NwSupError)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// Preset the config was derived from.
    pub name: String,
    pub process: ProcessSpec,
    pub errors: ErrorSpec,
    pub kernel: KernelId,
    pub bandwidth: BandwidthRule,
    pub grid: GridSpec,
    pub profile: NormalizationProfile,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub base_seed: u64,
    pub target: Target,
    pub regression: Option<RegressionFunction>,
    /// Turn assumption-check failures into warnings.
    pub override_checks: bool,
}

pub const PRESET_NAMES: [&str; 14] = [
    "T2.1",
    "T2.1-endo",
    "T2.1-rw",
    "T2.1-rw-endo",
    "T2.3-upper",
    "T2.3-lower",
    "C2.1",
    "C2.1-lower",
    "C2.1-wide",
    "E1",
    "E2-tar",
    "E2-arch",
    "E3",
    "T3.1",
];

fn h_fifth() -> BandwidthRule {
    BandwidthRule::power(0.2)
}

fn fine_spacing() -> SpacingRule {
    SpacingRule::BandwidthFraction { fraction: 0.1 }
}

/// `epsilon_0 = 0.1` gives `p = ceil(1 + 1/epsilon_0) = 11`.
const DEFAULT_MOMENT_ORDER: u32 = 11;

fn base(name: &str, process: ProcessSpec, profile: NormalizationProfile, range: RangeRule, target: Target) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        process,
        errors: ErrorSpec::exogenous(DEFAULT_MOMENT_ORDER, InnovationDist::Gaussian),
        kernel: KernelId::Epanechnikov,
        bandwidth: h_fifth(),
        grid: GridSpec { range, spacing: fine_spacing() },
        profile,
        n_grid: pow2_grid(10, 16),
        replicates: 300,
        base_seed: 1,
        target,
        regression: None,
        override_checks: false,
    }
}

const ENDOGENOUS: VolatilityMap = VolatilityMap::Sine { level: 1.0, amplitude: 0.5 };

/// Named desk-scale configurations.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    use NormalizationProfile::{RandomWalk, Stationary};
    let ar = ProcessSpec::MixingAr { rho: 0.5, dist: InnovationDist::Gaussian, burn_in: DEFAULT_BURN_IN };
    let rw = ProcessSpec::RandomWalk { dist: InnovationDist::Gaussian };
    let stationary_range = RangeRule::Fixed { b: 5.0 };
    let whole_line = RangeRule::Power { m: 1.0 };
    let key = PRESET_NAMES
        .iter()
        .find(|p| p.eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| {
            Error::invalid(format!("unknown preset `{name}` (known: {})", PRESET_NAMES.join(", ")))
        })?;
    let mut c = match *key {
        "T2.1" => base(key, ar, Stationary, stationary_range, Target::SupMartingale),
        "T2.1-endo" => {
            let mut c = base(key, ar, Stationary, stationary_range, Target::SupMartingale);
            c.errors.volatility = ENDOGENOUS;
            c
        }
        "T2.1-rw" => base(key, rw, RandomWalk, whole_line, Target::SupMartingale),
        "T2.1-rw-endo" => {
            let mut c = base(key, rw, RandomWalk, whole_line, Target::SupMartingale);
            c.errors.volatility = ENDOGENOUS;
            c
        }
        "T2.3-upper" => {
            let mut c = base(key, rw, RandomWalk, whole_line, Target::SupVariance);
            c.n_grid = pow2_grid(10, 17);
            c.replicates = 500;
            c
        }
        "C2.1" => {
            let mut c = base(key, rw, RandomWalk, whole_line, Target::SupVariance);
            c.replicates = 200;
            c
        }
        "T2.3-lower" | "C2.1-lower" => {
            let range = RangeRule::SqrtScaled { tau: 0.1, kappa: 0.0 };
            let mut c = base(key, rw, RandomWalk, range, Target::InfVarianceReciprocal);
            c.n_grid = pow2_grid(12, 17);
            c.replicates = 500;
            c
        }
        "C2.1-wide" => {
            let range = RangeRule::SqrtScaled { tau: 3.0, kappa: 0.0 };
            let mut c = base(key, rw, RandomWalk, range, Target::InfVarianceReciprocal);
            c.n_grid = pow2_grid(12, 17);
            c.replicates = 500;
            c
        }
        "E1" | "E2-tar" | "E2-arch" | "E3" => {
            let process = match *key {
                "E1" => ProcessSpec::LinearProcess {
                    coefficients: Coefficients::Geometric { rho: 0.5 },
                    dist: InnovationDist::Gaussian,
                    tail_tol: DEFAULT_TAIL_TOL,
                },
                "E2-tar" => ProcessSpec::Tar { a1: 0.3, a2: -0.6, dist: InnovationDist::Gaussian, burn_in: DEFAULT_BURN_IN },
                "E2-arch" => ProcessSpec::Arch { a1: 1.0, a2: 0.5, dist: InnovationDist::Gaussian, burn_in: DEFAULT_BURN_IN },
                _ => ar,
            };
            let mut c = base(key, process, Stationary, stationary_range, Target::SupVariance);
            c.replicates = 200;
            c
        }
        "T3.1" => {
            let range = RangeRule::SqrtScaled { tau: 0.1, kappa: 0.0 };
            let mut c = base(key, rw, RandomWalk, range, Target::NwSupError);
            c.errors = ErrorSpec::exogenous(4, InnovationDist::Gaussian);
            c.regression = Some(RegressionFunction::Logistic { alpha: 0.0, beta: 1.0 });
            c.n_grid = pow2_grid(11, 17);
            c
        }
        _ => unreachable!("every preset name is matched"),
    };
    c.name = key.to_string();
    Ok(c)
}

impl ExperimentConfig {
    /// Shape checks that cannot be overridden.
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::invalid("n-grid is empty"));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("n-grid must be strictly ascending"));
        }
        if self.n_grid[0] < 2 {
            return Err(Error::invalid("n-grid values must be at least 2"));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be at least 1"));
        }
        self.process.validate()?;
        self.profile.validate()?;
        if self.target.uses_errors() {
            self.errors.validate()?;
        }
        match (&self.regression, self.target) {
            (Some(m), _) => m.validate()?,
            (None, Target::NwSupError) => {
                return Err(Error::invalid("target nw needs a regression function"))
            }
            _ => {}
        }
        Ok(())
    }

    /// Assumption checks; failures are `(assumption, detail)` pairs.
    pub fn assumption_failures(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if let Err(e) = self.bandwidth.check(&self.n_grid) {
            out.push(("bandwidth".to_string(), e.to_string()));
        }
        let kd = check_assumption_2_2(&self.kernel.kernel());
        if !kd.all_pass() {
            out.push(("kernel".to_string(), format!("{kd:?}")));
        }
        if self.target.uses_errors() {
            match check_assumption_2_4(&self.bandwidth, &self.profile, self.errors.moment_order, &moment_rate_grid()) {
                Ok(r) if r.passes() => {}
                Ok(r) => out.push((
                    "moment-rate".to_string(),
                    format!(
                        "n c_n^-p (log n)^(p-1) with p = {} neither settles nor stays below 10x its first value: {:?}",
                        r.p, r.values
                    ),
                )),
                Err(e) => out.push(("moment-rate".to_string(), e.to_string())),
            }
        }
        // Example identifications and the NW bias bound are stated for
        // compactly supported kernels.
        let needs_compact = self.target == Target::NwSupError
            || (self.target == Target::SupVariance && self.process.is_stationary());
        if needs_compact {
            if let Err(e) = self.kernel.kernel().require_compact(self.target.name()) {
                out.push(("compact-kernel".to_string(), e.to_string()));
            }
        }
        if let Some(r) = contraction_diagnostics(&self.process) {
            if !r.passes() {
                out.push((
                    "contraction".to_string(),
                    format!(
                        "E log L = {:.4}, E L^2 = {:.4} (need < 0 and < 1)",
                        r.mean_log_lipschitz, r.mean_sq_lipschitz
                    ),
                ));
            }
        }
        out
    }

    fn seed(&self, n: usize, replicate: usize, role: u64) -> u64 {
        derive_seed(self.base_seed, &[n as u64, replicate as u64, role])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Row {
    pub n: usize,
    pub replicate: usize,
    pub raw: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub target: Target,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub table: ResultTable,
    pub warnings: Vec<String>,
}

/// The statistic of one `(n, replicate)` cell.
pub fn replicate_row(config: &ExperimentConfig, n: usize, replicate: usize) -> Result<Row> {
    let path = config.process.generate(n, config.seed(n, replicate, 0))?;
    let x = path.as_slice();
    let h = config.bandwidth.h(n);
    let c_n = config.profile.c_n(n, h);
    let grid = config.grid.build(n, h, c_n)?;
    let kernel = config.kernel.kernel();
    let (raw, value) = match config.target {
        Target::SupMartingale => {
            let u = gen_errors(&path, &config.errors, config.seed(n, replicate, 1))?;
            let sup = KernelSums::weighted(x, &u, kernel, h)?.sup_abs(&grid).value;
            (sup, sup / (c_n * (n as f64).ln()).sqrt())
        }
        Target::SupVariance => {
            let sup = KernelSums::squared(x, kernel, h)?.sup_abs(&grid).value;
            (sup, sup / c_n)
        }
        Target::InfVarianceReciprocal => {
            let inf = KernelSums::squared(x, kernel, h)?.inf(&grid).value;
            (inf, if inf == 0.0 { f64::INFINITY } else { c_n / inf })
        }
        Target::NwSupError => {
            let m = config.regression.as_ref().ok_or_else(|| Error::invalid("missing regression function"))?;
            let u = gen_errors(&path, &config.errors, config.seed(n, replicate, 1))?;
            let y: Vec<f64> = x.iter().zip(&u).map(|(&xt, ut)| m.eval(xt) + ut).collect();
            let fit = nw_fit(x, &y, &kernel, h, &grid)?;
            let e = uniform_error(&fit, m)?.sup_error;
            (e, e)
        }
    };
    Ok(Row { n, replicate, raw, value })
}

/// Runs every `(n, replicate)` cell in parallel. Rows come back sorted by
/// `(n, replicate)` and do not depend on the thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut warnings = Vec::new();
    for (assumption, detail) in config.assumption_failures() {
        if config.override_checks {
            warnings.push(format!("assumption `{assumption}` overridden: {detail}"));
        } else {
            return Err(Error::ConfigRejected { assumption, detail });
        }
    }
    let cells: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.replicates).map(move |r| (n, r)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(n, r)| replicate_row(config, n, r))
        .collect::<Result<Vec<Row>>>()?;
    Ok(ExperimentResult {
        config: config.clone(),
        table: ResultTable { target: config.target, rows },
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NSummary {
    pub n: usize,
    pub replicates: usize,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    /// Replicates whose statistic is infinite (e.g. `inf V_n = 0`).
    pub infinite: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_se: f64,
    /// `(n, median)` pairs the fit used.
    pub medians: Vec<(usize, f64)>,
}

impl ResultTable {
    fn column(&self, statistic: &str) -> Result<fn(&Row) -> f64> {
        if statistic == self.target.name() {
            Ok(|r| r.value)
        } else if statistic == self.target.raw_name() {
            Ok(|r| r.raw)
        } else {
            Err(Error::invalid(format!(
                "table holds `{}` and `{}`, not `{statistic}`",
                self.target.name(),
                self.target.raw_name()
            )))
        }
    }

    /// Values of a statistic grouped by `n`, ascending.
    pub fn grouped(&self, statistic: &str) -> Result<BTreeMap<usize, Vec<f64>>> {
        let col = self.column(statistic)?;
        let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            out.entry(r.n).or_default().push(col(r));
        }
        Ok(out)
    }

    pub fn summary(&self, statistic: &str) -> Result<Vec<NSummary>> {
        Ok(self
            .grouped(statistic)?
            .into_iter()
            .map(|(n, v)| NSummary {
                n,
                replicates: v.len(),
                median: quantile(&v, 0.5),
                q10: quantile(&v, 0.1),
                q90: quantile(&v, 0.9),
                infinite: v.iter().filter(|x| x.is_infinite()).count(),
            })
            .collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,replicate,statistic,value")?;
        let name = self.target.name();
        for r in &self.rows {
            writeln!(w, "{},{},{},{:.16e}", r.n, r.replicate, name, r.value)?;
        }
        Ok(())
    }
}

/// OLS of `log(median statistic)` on `log n`.
pub fn fit_rate(table: &ResultTable, statistic: &str) -> Result<RateFit> {
    fit_rate_vs(table, statistic, |n| n as f64)
}

/// OLS of `log(median statistic)` on `log covariate(n)`, e.g. `n h`.
pub fn fit_rate_vs(table: &ResultTable, statistic: &str, covariate: impl Fn(usize) -> f64) -> Result<RateFit> {
    let groups = table.grouped(statistic)?;
    if groups.len() < 3 {
        return Err(Error::invalid(format!(
            "rate fit needs at least 3 distinct n values, got {}",
            groups.len()
        )));
    }
    let medians: Vec<(usize, f64)> = groups.iter().map(|(&n, v)| (n, quantile(v, 0.5))).collect();
    if let Some(&(n, m)) = medians.iter().find(|(_, m)| !(*m > 0.0 && m.is_finite())) {
        return Err(Error::FitUndefined(format!("median {m} at n = {n} is not a positive finite number")));
    }
    let xs: Vec<f64> = medians.iter().map(|&(n, _)| covariate(n).ln()).collect();
    let ys: Vec<f64> = medians.iter().map(|&(_, m)| m.ln()).collect();
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::FitUndefined("covariate must be positive".into()));
    }
    let f = ols(&xs, &ys)?;
    Ok(RateFit { slope: f.slope, intercept: f.intercept, r_squared: f.r_squared, slope_se: f.slope_se, medians })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub preset: String,
    pub target: Target,
    pub statistic: String,
    pub base_seed: u64,
    pub replicates: usize,
    pub per_n: Vec<NSummary>,
    pub fit: Option<RateFit>,
    pub fit_note: Option<String>,
    pub warnings: Vec<String>,
}

impl ExperimentResult {
    pub fn summary(&self) -> Result<Summary> {
        let stat = self.table.target.name();
        let (fit, fit_note) = if self.config.replicates < MIN_FIT_REPLICATES {
            (None, Some(format!("rate fit needs at least {MIN_FIT_REPLICATES} replicates per n")))
        } else {
            match fit_rate(&self.table, stat) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            }
        };
        Ok(Summary {
            preset: self.config.name.clone(),
            target: self.table.target,
            statistic: stat.to_string(),
            base_seed: self.config.base_seed,
            replicates: self.config.replicates,
            per_n: self.table.summary(stat)?,
            fit,
            fit_note,
            warnings: self.warnings.clone(),
        })
    }

    pub fn summary_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.summary()?).map_err(|e| Error::Internal(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Flat key=value configuration.

/// Recognized keys, in application order.
pub const CONFIG_KEYS: [&str; 27] = [
    "preset",
    "process",
    "dist",
    "rho",
    "a1",
    "a2",
    "burn-in",
    "tail-tol",
    "small-set",
    "kernel",
    "bandwidth-c",
    "bandwidth-gamma",
    "bandwidth-log-exponent",
    "profile",
    "beta",
    "range",
    "spacing",
    "n-grid",
    "n-min",
    "n-max",
    "replicates",
    "seed",
    "target",
    "p",
    "error-dist",
    "volatility",
    "regression",
];

/// Extra key accepted outside [`CONFIG_KEYS`]' ordering constraints.
pub const OVERRIDE_KEY: &str = "override-checks";

pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("config line {}: expected key = value", i + 1)))?;
        let key = normalize_key(k);
        check_key(&key)?;
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::invalid(format!("config line {}: duplicate key `{key}`", i + 1)));
        }
    }
    Ok(map)
}

fn check_key(key: &str) -> Result<()> {
    if CONFIG_KEYS.contains(&key) || key == OVERRIDE_KEY {
        Ok(())
    } else {
        Err(Error::invalid(format!("unknown config key `{key}`")))
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::invalid(format!("`{key}`: cannot parse `{v}`")))
}

fn parts<'a>(key: &str, v: &'a str, min: usize, max: usize) -> Result<Vec<&'a str>> {
    let p: Vec<&str> = v.split(':').map(str::trim).collect();
    if p.len() < min || p.len() > max {
        return Err(Error::invalid(format!("`{key}`: malformed value `{v}`")));
    }
    Ok(p)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::invalid(format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

fn process_dist(p: &ProcessSpec) -> InnovationDist {
    match *p {
        ProcessSpec::RandomWalk { dist }
        | ProcessSpec::LinearProcess { dist, .. }
        | ProcessSpec::Tar { dist, .. }
        | ProcessSpec::Arch { dist, .. }
        | ProcessSpec::MixingAr { dist, .. } => dist,
        _ => InnovationDist::Gaussian,
    }
}

pub fn process_by_name(kind: &str, dist: InnovationDist) -> Result<ProcessSpec> {
    Ok(match kind.trim().to_ascii_lowercase().replace('_', "-").as_str() {
        "random-walk" | "rw" => ProcessSpec::RandomWalk { dist },
        "linear" | "linear-process" => ProcessSpec::LinearProcess {
            coefficients: Coefficients::Geometric { rho: 0.5 },
            dist,
            tail_tol: DEFAULT_TAIL_TOL,
        },
        "tar" => ProcessSpec::Tar { a1: 0.3, a2: -0.6, dist, burn_in: DEFAULT_BURN_IN },
        "arch" => ProcessSpec::Arch { a1: 1.0, a2: 0.5, dist, burn_in: DEFAULT_BURN_IN },
        "mixing-ar" | "ar" => ProcessSpec::MixingAr { rho: 0.5, dist, burn_in: DEFAULT_BURN_IN },
        "split-chain" => ProcessSpec::SplitChainAr { rho: 0.5, small_set_half_width: 1.0 },
        "full-regeneration" => ProcessSpec::FullRegeneration,
        other => {
            return Err(Error::invalid(format!(
                "unknown process `{other}` (expected random-walk, linear, tar, arch, mixing-ar, split-chain or full-regeneration)"
            )))
        }
    })
}

fn not_applicable(key: &str, p: &ProcessSpec) -> Error {
    Error::invalid(format!("`{key}` does not apply to process {:?}", p.kind()))
}

pub fn set_process_param(p: &mut ProcessSpec, key: &str, v: &str) -> Result<()> {
    match (key, p) {
        ("dist", ProcessSpec::RandomWalk { dist })
        | ("dist", ProcessSpec::LinearProcess { dist, .. })
        | ("dist", ProcessSpec::Tar { dist, .. })
        | ("dist", ProcessSpec::Arch { dist, .. })
        | ("dist", ProcessSpec::MixingAr { dist, .. }) => *dist = InnovationDist::parse(v)?,
        ("rho", ProcessSpec::MixingAr { rho, .. }) | ("rho", ProcessSpec::SplitChainAr { rho, .. }) => {
            *rho = num(key, v)?
        }
        ("rho", ProcessSpec::LinearProcess { coefficients, .. }) => {
            *coefficients = Coefficients::Geometric { rho: num(key, v)? }
        }
        ("a1", ProcessSpec::Tar { a1, .. }) | ("a1", ProcessSpec::Arch { a1, .. }) => *a1 = num(key, v)?,
        ("a2", ProcessSpec::Tar { a2, .. }) | ("a2", ProcessSpec::Arch { a2, .. }) => *a2 = num(key, v)?,
        ("burn-in", ProcessSpec::Tar { burn_in, .. })
        | ("burn-in", ProcessSpec::Arch { burn_in, .. })
        | ("burn-in", ProcessSpec::MixingAr { burn_in, .. }) => *burn_in = num(key, v)?,
        ("tail-tol", ProcessSpec::LinearProcess { tail_tol, .. }) => *tail_tol = num(key, v)?,
        ("small-set", ProcessSpec::SplitChainAr { small_set_half_width, .. }) => {
            *small_set_half_width = num(key, v)?
        }
        (_, p) => return Err(not_applicable(key, p)),
    }
    Ok(())
}

pub fn parse_profile(v: &str) -> Result<NormalizationProfile> {
    let p = parts("profile", v, 1, 2)?;
    match (p[0].to_ascii_lowercase().as_str(), p.get(1)) {
        ("stationary", None) => Ok(NormalizationProfile::Stationary),
        ("random-walk" | "rw", None) => Ok(NormalizationProfile::RandomWalk),
        ("generic", Some(b)) => Ok(NormalizationProfile::Generic { beta: num("profile", b)? }),
        _ => Err(Error::invalid(format!(
            "unknown profile `{v}` (expected stationary, random-walk or generic:<beta>)"
        ))),
    }
}

/// `fixed:<b>`, `sqrt:<tau>[:<kappa>]` or `power:<m>`.
pub fn parse_range(v: &str) -> Result<RangeRule> {
    let p = parts("range", v, 2, 3)?;
    let r = match (p[0].to_ascii_lowercase().as_str(), p.len()) {
        ("fixed", 2) => RangeRule::Fixed { b: num("range", p[1])? },
        ("sqrt", _) => RangeRule::SqrtScaled {
            tau: num("range", p[1])?,
            kappa: p.get(2).map(|k| num("range", k)).transpose()?.unwrap_or(0.0),
        },
        ("power", 2) => RangeRule::Power { m: num("range", p[1])? },
        _ => return Err(Error::invalid(format!("`range`: malformed value `{v}`"))),
    };
    let ok = match r {
        RangeRule::Fixed { b } => b >= 0.0,
        RangeRule::SqrtScaled { tau, kappa } => tau > 0.0 && (0.0..0.5).contains(&kappa),
        RangeRule::Power { m } => m > 0.0,
    };
    if !ok {
        return Err(Error::invalid(format!("`range`: parameters out of range in `{v}`")));
    }
    Ok(r)
}

/// `proof`, `explicit:<delta>` or `fraction:<f>`.
pub fn parse_spacing(v: &str) -> Result<SpacingRule> {
    let p = parts("spacing", v, 1, 2)?;
    let s = match (p[0].to_ascii_lowercase().as_str(), p.get(1)) {
        ("proof", None) => SpacingRule::ProofMatched,
        ("explicit", Some(d)) => SpacingRule::Explicit { delta: num("spacing", d)? },
        ("fraction", Some(f)) => SpacingRule::BandwidthFraction { fraction: num("spacing", f)? },
        _ => return Err(Error::invalid(format!("`spacing`: malformed value `{v}`"))),
    };
    match s {
        SpacingRule::Explicit { delta: x } | SpacingRule::BandwidthFraction { fraction: x } if !(x > 0.0) => {
            Err(Error::invalid("`spacing`: value must be positive"))
        }
        _ => Ok(s),
    }
}

/// `unit`, `sine:<level>:<amplitude>` or `affine:<intercept>:<slope>`.
pub fn parse_volatility(v: &str) -> Result<VolatilityMap> {
    let p = parts("volatility", v, 1, 3)?;
    match (p[0].to_ascii_lowercase().as_str(), p.len()) {
        ("unit", 1) => Ok(VolatilityMap::Unit),
        ("sine", 3) => Ok(VolatilityMap::Sine { level: num("volatility", p[1])?, amplitude: num("volatility", p[2])? }),
        ("affine", 3) => Ok(VolatilityMap::Affine { intercept: num("volatility", p[1])?, slope: num("volatility", p[2])? }),
        _ => Err(Error::invalid(format!("`volatility`: malformed value `{v}`"))),
    }
}

/// `none`, `logistic:<alpha>:<beta>`, `power:<alpha>:<beta>:<gamma>`,
/// `rational:<theta>` or `polynomial:<t0>,<t1>,...`.
pub fn parse_regression(v: &str) -> Result<Option<RegressionFunction>> {
    let p = parts("regression", v, 1, 4)?;
    let f = match (p[0].to_ascii_lowercase().as_str(), p.len()) {
        ("none", 1) => return Ok(None),
        ("logistic", 3) => RegressionFunction::Logistic { alpha: num("regression", p[1])?, beta: num("regression", p[2])? },
        ("power", 4) => RegressionFunction::Power {
            alpha: num("regression", p[1])?,
            beta: num("regression", p[2])?,
            gamma: num("regression", p[3])?,
        },
        ("rational", 2) => RegressionFunction::Rational { theta: num("regression", p[1])? },
        ("polynomial", 2) => RegressionFunction::Polynomial {
            coefficients: p[1].split(',').map(|c| num("regression", c)).collect::<Result<_>>()?,
        },
        _ => return Err(Error::invalid(format!("`regression`: malformed value `{v}`"))),
    };
    f.validate()?;
    Ok(Some(f))
}

pub fn parse_n_grid(v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| num("n-grid", s)).collect()
}

impl ExperimentConfig {
    /// Builds a config from a key map: the `preset` key (default `T2.1`)
    /// supplies defaults, then every other key overrides one field.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        for k in map.keys() {
            check_key(k)?;
        }
        let mut c = preset(map.get("preset").map(String::as_str).unwrap_or("T2.1"))?;
        for key in CONFIG_KEYS.iter().skip(1) {
            if let Some(v) = map.get(*key) {
                c.set(key, v)?;
            }
        }
        if let Some(v) = map.get(OVERRIDE_KEY) {
            c.override_checks = parse_bool(OVERRIDE_KEY, v)?;
        }
        Ok(c)
    }

    /// Overrides a single field from its config key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "process" => self.process = process_by_name(v, process_dist(&self.process))?,
            "dist" | "rho" | "a1" | "a2" | "burn-in" | "tail-tol" | "small-set" => {
                set_process_param(&mut self.process, key, v)?
            }
            "kernel" => self.kernel = KernelId::parse(v)?,
            "bandwidth-c" => self.bandwidth.c = num(key, v)?,
            "bandwidth-gamma" => self.bandwidth.gamma = num(key, v)?,
            "bandwidth-log-exponent" => self.bandwidth.log_exponent = num(key, v)?,
            "profile" => self.profile = parse_profile(v)?,
            "beta" => self.profile = NormalizationProfile::Generic { beta: num(key, v)? },
            "range" => self.grid.range = parse_range(v)?,
            "spacing" => self.grid.spacing = parse_spacing(v)?,
            "n-grid" => self.n_grid = parse_n_grid(v)?,
            "n-min" => {
                let lo: usize = num(key, v)?;
                self.n_grid.retain(|&n| n >= lo);
                if self.n_grid.is_empty() {
                    return Err(Error::invalid(format!("n-min = {lo} removes every n-grid value")));
                }
            }
            "n-max" => {
                let hi: usize = num(key, v)?;
                self.n_grid.retain(|&n| n <= hi);
                if self.n_grid.is_empty() {
                    return Err(Error::invalid(format!("n-max = {hi} removes every n-grid value")));
                }
            }
            "replicates" => self.replicates = num(key, v)?,
            "seed" => self.base_seed = num(key, v)?,
            "target" => self.target = Target::parse(v)?,
            "p" => self.errors.moment_order = num(key, v)?,
            "error-dist" => self.errors.dist = InnovationDist::parse(v)?,
            "volatility" => self.errors.volatility = parse_volatility(v)?,
            "regression" => self.regression = parse_regression(v)?,
            OVERRIDE_KEY => self.override_checks = parse_bool(key, v)?,
            "preset" => return Err(Error::invalid("`preset` can only be applied through from_map")),
            _ => return Err(Error::invalid(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }
}
