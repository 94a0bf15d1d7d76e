//! `unirate`: simulate regressors, evaluate kernel sums and Nadaraya–Watson
//! fits, estimate regeneration rates and run Monte Carlo presets.

use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use unirate_core::experiments::{
    moment_rate_grid, parse_config_text, parse_profile, parse_range, parse_regression,
    parse_spacing, parse_volatility, process_by_name, run_experiment, set_process_param,
    ExperimentConfig, CONFIG_KEYS, OVERRIDE_KEY,
};
use unirate_core::harris::{
    crossing_record, default_checkpoints, estimate_beta, estimate_beta_pooled,
    local_time_comparison_at, RegenRecord,
};
use unirate_core::kernels::check_assumption_2_2;
use unirate_core::processes::{
    contraction_diagnostics, gen_errors, gen_split_chain, FullRegenerationChain, GaussianAr1Chain,
    ProcessKind,
};
use unirate_core::regression::{error_decomposition, nw_fit, uniform_error};
use unirate_core::rng::derive_seed;
use unirate_core::sums::{check_assumption_2_4, normalized_ratios, KernelSums};
use unirate_core::{
    BandwidthRule, Error, ErrorSpec, GridSpec, InnovationDist, KernelId, NormalizationProfile,
    Path, ProcessSpec,
};

#[derive(Parser)]
#[command(name = "unirate", version, about = "Kernel-weighted martingale sums, NW regression and rate experiments")]
struct Cli {
    /// Base seed; drawn at random (and printed to stderr) when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Emit a JSON summary instead of CSV rows.
    #[arg(long, global = true)]
    json: bool,
    /// Worker thread cap for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a regressor path (and optionally an error sequence).
    Simulate(SimulateArgs),
    /// Conditional variance sums V_n over a grid.
    Vsum(SumArgs),
    /// Martingale sums S_n over a grid.
    Ssum(SsumArgs),
    /// Nadaraya–Watson fit of y = m(x) + u.
    Regress(RegressArgs),
    /// Regeneration-count exponent from a split chain or walk crossings.
    Beta(BetaArgs),
    /// Kernel occupation sums of random walks vs. Brownian local time.
    Localtime(LocaltimeArgs),
    /// Monte Carlo experiment from a preset and/or config file.
    Experiment(ExperimentArgs),
    /// Assumption checks for a bandwidth/profile/moment/kernel/process setup.
    Check(CheckArgs),
}

#[derive(Args, Clone)]
struct ProcessArgs {
    /// random-walk, linear, tar, arch, mixing-ar, split-chain or full-regeneration.
    #[arg(long, default_value = "random-walk")]
    process: String,
    /// Path length.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Innovation law: gaussian, laplace or logistic.
    #[arg(long)]
    dist: Option<String>,
    /// AR coefficient (mixing-ar, split-chain) or geometric MA decay (linear).
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    a1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    a2: Option<f64>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    tail_tol: Option<f64>,
    /// Small-set half-width c for split-chain.
    #[arg(long)]
    small_set: Option<f64>,
}

impl ProcessArgs {
    fn spec(&self) -> Result<ProcessSpec, Error> {
        let dist = match &self.dist {
            Some(d) => InnovationDist::parse(d)?,
            None => InnovationDist::Gaussian,
        };
        let mut spec = process_by_name(&self.process, dist)?;
        let params: [(&str, Option<String>); 6] = [
            ("rho", self.rho.map(|v| v.to_string())),
            ("a1", self.a1.map(|v| v.to_string())),
            ("a2", self.a2.map(|v| v.to_string())),
            ("burn-in", self.burn_in.map(|v| v.to_string())),
            ("tail-tol", self.tail_tol.map(|v| v.to_string())),
            ("small-set", self.small_set.map(|v| v.to_string())),
        ];
        if self.dist.is_some() {
            set_process_param(&mut spec, "dist", self.dist.as_deref().unwrap())?;
        }
        for (key, v) in params {
            if let Some(v) = v {
                set_process_param(&mut spec, key, &v)?;
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Clone)]
struct ErrorArgs {
    /// Law of eta_t in u_t = sigma(x_t) eta_t.
    #[arg(long, default_value = "gaussian")]
    error_dist: String,
    /// Conditional moment order p.
    #[arg(long, default_value_t = 4)]
    p: u32,
    /// unit, sine:<level>:<amplitude> or affine:<intercept>:<slope>.
    #[arg(long, default_value = "unit")]
    volatility: String,
}

impl ErrorArgs {
    fn spec(&self) -> Result<ErrorSpec, Error> {
        let spec = ErrorSpec {
            moment_order: self.p,
            dist: InnovationDist::parse(&self.error_dist)?,
            volatility: parse_volatility(&self.volatility)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Clone)]
struct SmoothingArgs {
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,
    /// Fixed bandwidth (instead of the c n^-gamma (log n)^e rule).
    #[arg(long, conflicts_with_all = ["bandwidth_c", "bandwidth_gamma", "bandwidth_log_exponent"])]
    h: Option<f64>,
    #[arg(long)]
    bandwidth_c: Option<f64>,
    #[arg(long)]
    bandwidth_gamma: Option<f64>,
    #[arg(long)]
    bandwidth_log_exponent: Option<f64>,
    /// fixed:<b>, sqrt:<tau>[:<kappa>] or power:<m>.
    #[arg(long, default_value = "fixed:3")]
    range: String,
    /// proof, explicit:<delta> or fraction:<f>.
    #[arg(long, default_value = "fraction:0.1")]
    spacing: String,
    /// stationary, random-walk or generic:<beta>; defaults from the process.
    #[arg(long)]
    profile: Option<String>,
}

struct Smoothing {
    kernel: KernelId,
    h: f64,
    grid: unirate_core::Grid,
    profile: NormalizationProfile,
}

impl SmoothingArgs {
    fn resolve(&self, n: usize, process: &ProcessSpec) -> Result<Smoothing, Error> {
        let kernel = KernelId::parse(&self.kernel)?;
        let h = match self.h {
            Some(h) if h > 0.0 && h.is_finite() => h,
            Some(h) => return Err(Error::InvalidArgument(format!("bandwidth must be positive (got {h})"))),
            None => {
                let mut rule = BandwidthRule::power(0.2);
                rule.c = self.bandwidth_c.unwrap_or(rule.c);
                rule.gamma = self.bandwidth_gamma.unwrap_or(rule.gamma);
                rule.log_exponent = self.bandwidth_log_exponent.unwrap_or(rule.log_exponent);
                rule.check(&[])?;
                rule.h(n)
            }
        };
        let profile = match &self.profile {
            Some(p) => parse_profile(p)?,
            None if process.is_stationary() => NormalizationProfile::Stationary,
            None => NormalizationProfile::RandomWalk,
        };
        profile.validate()?;
        let spec = GridSpec { range: parse_range(&self.range)?, spacing: parse_spacing(&self.spacing)? };
        let grid = spec.build(n, h, profile.c_n(n, h))?;
        Ok(Smoothing { kernel, h, grid, profile })
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    process: ProcessArgs,
    /// Also draw a martingale-difference error sequence u_t.
    #[arg(long)]
    errors: bool,
    #[command(flatten)]
    error: ErrorArgs,
}

#[derive(Args)]
struct SumArgs {
    #[command(flatten)]
    process: ProcessArgs,
    #[command(flatten)]
    smoothing: SmoothingArgs,
}

#[derive(Args)]
struct SsumArgs {
    #[command(flatten)]
    process: ProcessArgs,
    #[command(flatten)]
    smoothing: SmoothingArgs,
    #[command(flatten)]
    error: ErrorArgs,
}

#[derive(Args)]
struct RegressArgs {
    #[command(flatten)]
    process: ProcessArgs,
    #[command(flatten)]
    smoothing: SmoothingArgs,
    #[command(flatten)]
    error: ErrorArgs,
    /// logistic:<a>:<b>, power:<a>:<b>:<g>, rational:<theta> or polynomial:<t0>,<t1>,...
    #[arg(long, default_value = "logistic:0:1")]
    regression: String,
    /// Add the noise/bias decomposition columns.
    #[arg(long)]
    decompose: bool,
}

#[derive(Args)]
struct BetaArgs {
    #[command(flatten)]
    process: ProcessArgs,
    /// Independent paths pooled for the walk's crossing counts.
    #[arg(long, default_value_t = 1)]
    replicates: usize,
}

#[derive(Args)]
struct LocaltimeArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,
    /// Bandwidth; n^-1/5 when absent.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, default_value_t = 200)]
    replicates: usize,
    /// Evaluate at y_n = level * sqrt(n).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    level: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Flat key = value config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    process: Option<String>,
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    a1: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    a2: Option<String>,
    #[arg(long)]
    burn_in: Option<String>,
    #[arg(long)]
    tail_tol: Option<String>,
    #[arg(long)]
    small_set: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    bandwidth_c: Option<String>,
    #[arg(long)]
    bandwidth_gamma: Option<String>,
    #[arg(long)]
    bandwidth_log_exponent: Option<String>,
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    range: Option<String>,
    #[arg(long)]
    spacing: Option<String>,
    /// Comma-separated sample sizes.
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long)]
    n_min: Option<String>,
    #[arg(long)]
    n_max: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    /// sup-s, sup-v, inf-v or nw.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    error_dist: Option<String>,
    #[arg(long)]
    volatility: Option<String>,
    #[arg(long)]
    regression: Option<String>,
    /// Downgrade assumption-check failures to warnings.
    #[arg(long)]
    override_checks: bool,
}

impl ExperimentArgs {
    fn flag_map(&self) -> BTreeMap<&'static str, &Option<String>> {
        let pairs: [(&'static str, &Option<String>); 26] = [
            ("preset", &self.preset),
            ("process", &self.process),
            ("dist", &self.dist),
            ("rho", &self.rho),
            ("a1", &self.a1),
            ("a2", &self.a2),
            ("burn-in", &self.burn_in),
            ("tail-tol", &self.tail_tol),
            ("small-set", &self.small_set),
            ("kernel", &self.kernel),
            ("bandwidth-c", &self.bandwidth_c),
            ("bandwidth-gamma", &self.bandwidth_gamma),
            ("bandwidth-log-exponent", &self.bandwidth_log_exponent),
            ("profile", &self.profile),
            ("beta", &self.beta),
            ("range", &self.range),
            ("spacing", &self.spacing),
            ("n-grid", &self.n_grid),
            ("n-min", &self.n_min),
            ("n-max", &self.n_max),
            ("replicates", &self.replicates),
            ("target", &self.target),
            ("p", &self.p),
            ("error-dist", &self.error_dist),
            ("volatility", &self.volatility),
            ("regression", &self.regression),
        ];
        debug_assert!(pairs.iter().all(|(k, _)| CONFIG_KEYS.contains(k)));
        pairs.into_iter().collect()
    }
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 1.0)]
    bandwidth_c: f64,
    #[arg(long, default_value_t = 0.2)]
    bandwidth_gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    bandwidth_log_exponent: f64,
    /// stationary, random-walk or generic:<beta>.
    #[arg(long, default_value = "random-walk")]
    profile: String,
    /// Moment order p.
    #[arg(long, default_value_t = 4)]
    p: u32,
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,
    /// Process for the contraction check (tar or arch take --a1/--a2).
    #[arg(long)]
    process: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    a1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    a2: Option<f64>,
}

// ---------------------------------------------------------------------------

enum Failure {
    Usage(String),
    Runtime(String),
    CheckFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::ConfigRejected { .. } => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

struct Ctx {
    given_seed: Option<u64>,
    drawn_seed: OnceCell<u64>,
    out: Option<PathBuf>,
    json: bool,
}

impl Ctx {
    /// The `--seed` value, or a fresh draw that is reported on stderr.
    fn seed(&self) -> u64 {
        self.given_seed.unwrap_or_else(|| {
            *self.drawn_seed.get_or_init(|| {
                let s = rand::random::<u64>();
                eprintln!("seed: {s}");
                s
            })
        })
    }

    fn writer(&self) -> io::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    fn stream(&self, role: u64) -> u64 {
        derive_seed(self.seed(), &[role])
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}


fn generate(args: &ProcessArgs, ctx: &Ctx) -> Result<(Path, Option<RegenRecord>), Error> {
    let spec = args.spec()?;
    let seed = ctx.stream(0);
    match &spec {
        ProcessSpec::SplitChainAr { rho, small_set_half_width } => {
            let chain = GaussianAr1Chain::new(*rho, *small_set_half_width)?;
            gen_split_chain(args.n, &chain, seed).map(|(p, r)| (p, Some(r)))
        }
        ProcessSpec::FullRegeneration => {
            gen_split_chain(args.n, &FullRegenerationChain, seed).map(|(p, r)| (p, Some(r)))
        }
        _ => spec.generate(args.n, seed).map(|p| (p, None)),
    }
}

fn simulate(a: &SimulateArgs, ctx: &Ctx) -> CliResult {
    let (path, record) = generate(&a.process, ctx)?;
    let u = if a.errors { Some(gen_errors(&path, &a.error.spec()?, ctx.stream(1))?) } else { None };
    let mut w = ctx.writer()?;
    if ctx.json {
        let mut doc = json!({ "seed": ctx.seed(), "n": path.len(), "process": path.params, "x": path.values });
        if let Some(u) = &u {
            doc["u"] = json!(u);
        }
        if let Some(r) = &record {
            doc["regenerations"] = json!(r.times());
        }
        writeln!(w, "{doc}")?;
    } else {
        let mut header = vec!["t", "x"];
        if u.is_some() {
            header.push("u");
        }
        if record.is_some() {
            header.push("regen");
        }
        writeln!(w, "{}", header.join(","))?;
        for (i, &x) in path.values.iter().enumerate() {
            write!(w, "{},{}", i + 1, fmt(x))?;
            if let Some(u) = &u {
                write!(w, ",{}", fmt(u[i]))?;
            }
            if let Some(r) = &record {
                write!(w, ",{}", u8::from(r.indicators()[i]))?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Grid values as CSV `x,<name>` or as a JSON summary with sup/inf.
fn emit_grid(ctx: &Ctx, name: &str, sm: &Smoothing, n: usize, values: &[f64], sums: &KernelSums, signed: bool) -> CliResult {
    let mut w = ctx.writer()?;
    if ctx.json {
        let sup = sums.sup_abs(&sm.grid);
        let mut doc = json!({
            "statistic": name,
            "n": n,
            "h": sm.h,
            "grid_points": sm.grid.len(),
            "seed": ctx.seed(),
            "sup_abs": sup.value,
            "argsup": sm.grid.point(sup.index),
        });
        if signed {
            let r = normalized_ratios(sup.value, 0.0, 1.0, n, sm.h, &sm.profile)?;
            doc["c_n"] = json!(r.c_n);
            doc["sup_ratio"] = json!(r.martingale);
        } else {
            let inf = sums.inf(&sm.grid);
            let r = normalized_ratios(0.0, sup.value, inf.value, n, sm.h, &sm.profile)?;
            doc["c_n"] = json!(r.c_n);
            doc["sup_ratio"] = json!(r.variance_upper);
            doc["inf"] = json!(inf.value);
            doc["arginf"] = json!(sm.grid.point(inf.index));
            doc["inf_reciprocal_ratio"] = json!(r.variance_lower_reciprocal);
        }
        writeln!(w, "{doc}")?;
    } else {
        writeln!(w, "x,{name}")?;
        for (j, v) in values.iter().enumerate() {
            writeln!(w, "{},{}", fmt(sm.grid.point(j)), fmt(*v))?;
        }
    }
    w.flush()?;
    Ok(())
}

const MAX_CSV_GRID: usize = 5_000_000;

fn check_grid_size(sm: &Smoothing, ctx: &Ctx) -> CliResult {
    if !ctx.json && sm.grid.len() > MAX_CSV_GRID {
        return Err(Failure::Usage(format!(
            "grid has {} points; narrow --range or use --json for sup/inf only",
            sm.grid.len()
        )));
    }
    Ok(())
}

fn vsum(a: &SumArgs, ctx: &Ctx) -> CliResult {
    let (path, _) = generate(&a.process, ctx)?;
    let sm = a.smoothing.resolve(path.len(), &path.params)?;
    check_grid_size(&sm, ctx)?;
    let sums = KernelSums::squared(&path.values, sm.kernel.kernel(), sm.h)?;
    let values = if ctx.json { Vec::new() } else { sums.over(&sm.grid) };
    emit_grid(ctx, "v", &sm, path.len(), &values, &sums, false)
}

fn ssum(a: &SsumArgs, ctx: &Ctx) -> CliResult {
    let (path, _) = generate(&a.process, ctx)?;
    let sm = a.smoothing.resolve(path.len(), &path.params)?;
    check_grid_size(&sm, ctx)?;
    let u = gen_errors(&path, &a.error.spec()?, ctx.stream(1))?;
    let sums = KernelSums::weighted(&path.values, &u, sm.kernel.kernel(), sm.h)?;
    let values = if ctx.json { Vec::new() } else { sums.over(&sm.grid) };
    emit_grid(ctx, "s", &sm, path.len(), &values, &sums, true)
}

fn regress(a: &RegressArgs, ctx: &Ctx) -> CliResult {
    let m = parse_regression(&a.regression)?
        .ok_or_else(|| Failure::Usage("regress needs a regression function".into()))?;
    let (path, _) = generate(&a.process, ctx)?;
    let sm = a.smoothing.resolve(path.len(), &path.params)?;
    check_grid_size(&sm, ctx)?;
    let u = gen_errors(&path, &a.error.spec()?, ctx.stream(1))?;
    let x = path.as_slice();
    let y: Vec<f64> = x.iter().zip(&u).map(|(&xt, ut)| m.eval(xt) + ut).collect();
    let kernel = sm.kernel.kernel();
    let fit = nw_fit(x, &y, &kernel, sm.h, &sm.grid)?;
    let err = uniform_error(&fit, &m)?;
    let mut w = ctx.writer()?;
    if ctx.json {
        let doc = json!({
            "n": path.len(),
            "h": sm.h,
            "grid_points": fit.points.len(),
            "sup_error": err.sup_error,
            "argmax": err.argmax_point,
            "undefined_fraction": err.undefined_fraction,
            "delta_n": m.envelope_sup(&fit.points),
            "regression": m,
            "seed": ctx.seed(),
        });
        writeln!(w, "{doc}")?;
    } else {
        let dec = if a.decompose { Some(error_decomposition(x, &y, &u, &m, &kernel, sm.h, &sm.grid)?) } else { None };
        let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
        write!(w, "y,m_hat,m,denominator,defined")?;
        if dec.is_some() {
            write!(w, ",theta1,theta2")?;
        }
        writeln!(w)?;
        for j in 0..fit.points.len() {
            let p = fit.points[j];
            write!(
                w,
                "{},{},{},{},{}",
                fmt(p),
                opt(fit.estimates[j]),
                fmt(m.eval(p)),
                fmt(fit.denominators[j]),
                u8::from(fit.estimates[j].is_some())
            )?;
            if let Some(d) = &dec {
                write!(w, ",{},{}", opt(d.theta1[j]), opt(d.theta2[j]))?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn beta(a: &BetaArgs, ctx: &Ctx) -> CliResult {
    if a.replicates == 0 {
        return Err(Failure::Usage("replicates must be at least 1".into()));
    }
    let spec = a.process.spec()?;
    let checkpoints = default_checkpoints(a.process.n);
    let (profile, count, proxy) = match spec.kind() {
        ProcessKind::SplitChain => {
            if a.replicates != 1 {
                return Err(Failure::Usage("split chains use a single long path; drop --replicates".into()));
            }
            let rec = generate(&a.process, ctx)?.1.ok_or_else(|| Failure::Runtime("split chain without a record".into()))?;
            (estimate_beta(&rec, &checkpoints)?, rec.count() as f64, "split-chain regenerations")
        }
        ProcessKind::RandomWalk => {
            use rayon::prelude::*;
            let seed = ctx.seed();
            let records: Vec<RegenRecord> = (0..a.replicates as u64)
                .into_par_iter()
                .map(|r| spec.generate(a.process.n, derive_seed(seed, &[0, r])).map(|p| crossing_record(&p.values)))
                .collect::<Result<_, Error>>()?;
            let mean = records.iter().map(|r| r.count() as f64).sum::<f64>() / records.len() as f64;
            (estimate_beta_pooled(&records, &checkpoints)?, mean, "zero crossings")
        }
        _ => {
            return Err(Failure::Usage(
                "beta needs a regeneration structure: use --process split-chain, full-regeneration or random-walk".into(),
            ))
        }
    };
    let mut w = ctx.writer()?;
    if ctx.json {
        let doc = json!({
            "beta_hat": profile.beta_hat,
            "beta_se": profile.beta_se,
            "intercept": profile.intercept,
            "mean_count": count,
            "proxy": proxy,
            "n": a.process.n,
            "seed": ctx.seed(),
        });
        writeln!(w, "{doc}")?;
    } else {
        writeln!(w, "beta_hat,beta_se,intercept,mean_count")?;
        writeln!(w, "{},{},{},{}", fmt(profile.beta_hat), fmt(profile.beta_se), fmt(profile.intercept), fmt(count))?;
    }
    w.flush()?;
    Ok(())
}

fn localtime(a: &LocaltimeArgs, ctx: &Ctx) -> CliResult {
    let kernel = KernelId::parse(&a.kernel)?.kernel();
    let h = a.h.unwrap_or_else(|| (a.n as f64).powf(-0.2));
    let r = local_time_comparison_at(a.n, h, &kernel, a.replicates, ctx.seed(), a.level)?;
    let mut w = ctx.writer()?;
    if ctx.json {
        let doc = json!({
            "n": r.n,
            "h": r.h,
            "level": r.level,
            "replicates": r.statistics.len(),
            "ks_statistic": r.ks_statistic,
            "ks_p_value": r.ks_p_value,
            "near_zero_fraction": r.near_zero_fraction,
            "oracle_near_zero_fraction": r.oracle_near_zero_fraction,
            "small_window_warning": r.small_window_warning,
            "seed": ctx.seed(),
        });
        writeln!(w, "{doc}")?;
    } else {
        writeln!(w, "replicate,statistic,oracle")?;
        for (i, (s, o)) in r.statistics.iter().zip(&r.oracle).enumerate() {
            writeln!(w, "{i},{},{}", fmt(*s), fmt(*o))?;
        }
    }
    if r.small_window_warning {
        eprintln!("warning: sqrt(n) h = {:.2} < 10; the local-time limit may not have kicked in", (a.n as f64).sqrt() * h);
    }
    w.flush()?;
    Ok(())
}

fn experiment(a: &ExperimentArgs, ctx: &Ctx) -> CliResult {
    let mut map: BTreeMap<String, String> = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", p.display())))?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    for (k, v) in a.flag_map() {
        if let Some(v) = v {
            map.insert(k.to_string(), v.clone());
        }
    }
    if a.override_checks {
        map.insert(OVERRIDE_KEY.to_string(), "true".into());
    }
    // An explicit --seed beats the config file; a drawn seed only fills a gap.
    if ctx.given_seed.is_some() || !map.contains_key("seed") {
        map.insert("seed".into(), ctx.seed().to_string());
    }
    let config = ExperimentConfig::from_map(&map)?;
    let result = run_experiment(&config)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    if ctx.json {
        let json = result.summary_json()?;
        if ctx.out.is_some() {
            // CSV to the file, summary to stdout.
            result.table.write_csv(ctx.writer()?)?;
        }
        println!("{json}");
    } else {
        let mut w = ctx.writer()?;
        result.table.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn check(a: &CheckArgs, ctx: &Ctx) -> CliResult {
    let rule = BandwidthRule { c: a.bandwidth_c, gamma: a.bandwidth_gamma, log_exponent: a.bandwidth_log_exponent };
    let profile = parse_profile(&a.profile)?;
    profile.validate()?;
    let grid = moment_rate_grid();
    let mut lines = Vec::new();
    let mut all = true;
    let mut record = |name: &str, pass: bool, detail: String| {
        all &= pass;
        lines.push(format!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" }));
    };

    match rule.check(&grid) {
        Ok(()) => record("bandwidth", true, format!("h -> 0 and n h -> inf along n = 2^10..2^20 (h(2^20) = {:.4e})", rule.h(1 << 20))),
        Err(e) => record("bandwidth", false, e.to_string()),
    }
    let m = check_assumption_2_4(&rule, &profile, a.p, &grid)?;
    let first = m.values[0].1;
    let last = m.values.last().unwrap().1;
    record(
        "moment-rate",
        m.passes(),
        format!(
            "n c_n^-p (log n)^(p-1) with p = {}: {:.4e} at n = 2^10, {:.4e} at n = 2^20; tail non-increasing: {}; within 10x of first: {}",
            a.p, first, last, m.tail_non_increasing, m.bounded_by_ten_times_first
        ),
    );
    let kid = KernelId::parse(&a.kernel)?;
    let kd = check_assumption_2_2(&kid.kernel());
    record(
        "kernel",
        kd.all_pass(),
        format!(
            "{}: bounded {}, Lipschitz {} (worst ratio {:.4}), integrable {}, compact {}",
            kid.name(),
            kd.bounded,
            kd.lipschitz_verified,
            kd.worst_lipschitz_ratio,
            kd.integrable,
            kd.compact_support
        ),
    );
    if let Some(p) = &a.process {
        let mut spec = process_by_name(p, InnovationDist::Gaussian)?;
        if let Some(v) = a.a1 {
            set_process_param(&mut spec, "a1", &v.to_string())?;
        }
        if let Some(v) = a.a2 {
            set_process_param(&mut spec, "a2", &v.to_string())?;
        }
        match contraction_diagnostics(&spec) {
            Some(r) => record(
                "contraction",
                r.passes(),
                format!("E log L = {:.4}, E L^2 = {:.4} over {} draws", r.mean_log_lipschitz, r.mean_sq_lipschitz, r.draws),
            ),
            None => match spec.validate() {
                Ok(()) => record("process", true, format!("{:?} parameters valid", spec.kind())),
                Err(e) => record("process", false, e.to_string()),
            },
        }
    }
    let mut w = ctx.writer()?;
    if ctx.json {
        writeln!(w, "{}", json!({ "pass": all, "checks": lines }))?;
    } else {
        for l in &lines {
            writeln!(w, "{l}")?;
        }
    }
    w.flush()?;
    if all {
        Ok(())
    } else {
        Err(Failure::CheckFailed)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let ctx = Ctx { given_seed: cli.seed, drawn_seed: OnceCell::new(), out: cli.out, json: cli.json };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a, &ctx),
        Command::Vsum(a) => vsum(a, &ctx),
        Command::Ssum(a) => ssum(a, &ctx),
        Command::Regress(a) => regress(a, &ctx),
        Command::Beta(a) => beta(a, &ctx),
        Command::Localtime(a) => localtime(a, &ctx),
        Command::Experiment(a) => experiment(a, &ctx),
        Command::Check(a) => check(a, &ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::CheckFailed) => ExitCode::from(1),
    }
}
