//! Trajectory generators: random walks, linear processes, iterated random
//! functions (TAR / ARCH), mixing AR(1), split chains, and martingale
//! difference error sequences.

mod errors;
mod innovations;
mod split_chain;

pub use errors::{gen_errors, ErrorSpec, VolatilityMap};
pub use innovations::InnovationDist;
pub use split_chain::{gen_split_chain, FullRegenerationChain, GaussianAr1Chain, MinorizedChain};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SimRng};

pub const DEFAULT_BURN_IN: usize = 1_000;
pub const DEFAULT_TAIL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessKind {
    RandomWalk,
    LinearProcess,
    Tar,
    Arch,
    MixingAr,
    SplitChain,
}

/// MA coefficient family for [`gen_linear_process`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coefficients {
    /// `phi_k = rho^k`.
    Geometric { rho: f64 },
    Finite(Vec<f64>),
}

impl Coefficients {
    fn validate(&self) -> Result<()> {
        match self {
            Coefficients::Geometric { rho } => {
                if !rho.is_finite() || rho.abs() >= 1.0 {
                    return Err(Error::invalid(format!(
                        "geometric coefficients with |rho| = {} >= 1 are not absolutely summable",
                        rho.abs()
                    )));
                }
            }
            Coefficients::Finite(phi) => {
                if phi.is_empty() || phi.iter().any(|p| !p.is_finite()) {
                    return Err(Error::invalid("coefficient list must be nonempty and finite"));
                }
            }
        }
        if self.total() == 0.0 {
            return Err(Error::invalid("coefficients sum to zero (phi = sum phi_k must be nonzero)"));
        }
        Ok(())
    }

    fn total(&self) -> f64 {
        match self {
            Coefficients::Geometric { rho } => 1.0 / (1.0 - rho),
            Coefficients::Finite(phi) => phi.iter().sum(),
        }
    }

    fn get(&self, k: usize) -> f64 {
        match self {
            Coefficients::Geometric { rho } => rho.powi(k as i32),
            Coefficients::Finite(phi) => phi.get(k).copied().unwrap_or(0.0),
        }
    }

    /// `sum_{k > last} |phi_k|`.
    pub fn tail_mass(&self, last: usize) -> f64 {
        match self {
            Coefficients::Geometric { rho } => {
                let r = rho.abs();
                r.powi(last as i32 + 1) / (1.0 - r)
            }
            Coefficients::Finite(phi) => phi.iter().skip(last + 1).map(|p| p.abs()).sum(),
        }
    }

    /// Smallest `K` whose discarded tail is below `tail_tol`.
    pub fn truncation_index(&self, tail_tol: f64) -> Result<usize> {
        if !(tail_tol > 0.0) {
            return Err(Error::invalid("tail_tol must be positive"));
        }
        self.validate()?;
        let mut k = 0usize;
        while self.tail_mass(k) >= tail_tol {
            k += 1;
            if k > 10_000_000 {
                return Err(Error::invalid("coefficient tail decays too slowly to truncate"));
            }
        }
        Ok(k)
    }
}

/// Full parameter record of a generator; doubles as the provenance stored
/// on every [`Path`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "kebab-case")]
pub enum ProcessSpec {
    RandomWalk { dist: InnovationDist },
    LinearProcess { coefficients: Coefficients, dist: InnovationDist, tail_tol: f64 },
    Tar { a1: f64, a2: f64, dist: InnovationDist, burn_in: usize },
    Arch { a1: f64, a2: f64, dist: InnovationDist, burn_in: usize },
    MixingAr { rho: f64, dist: InnovationDist, burn_in: usize },
    /// Built-in Gaussian AR(1) split chain with small set `[-c, c]`.
    SplitChainAr { rho: f64, small_set_half_width: f64 },
    /// i.i.d. standard normal chain: regenerates at every step.
    FullRegeneration,
}

impl ProcessSpec {
    pub fn kind(&self) -> ProcessKind {
        match self {
            ProcessSpec::RandomWalk { .. } => ProcessKind::RandomWalk,
            ProcessSpec::LinearProcess { .. } => ProcessKind::LinearProcess,
            ProcessSpec::Tar { .. } => ProcessKind::Tar,
            ProcessSpec::Arch { .. } => ProcessKind::Arch,
            ProcessSpec::MixingAr { .. } => ProcessKind::MixingAr,
            ProcessSpec::SplitChainAr { .. } | ProcessSpec::FullRegeneration => {
                ProcessKind::SplitChain
            }
        }
    }

    /// True for regressors whose natural normalization is `c_n = n h`.
    pub fn is_stationary(&self) -> bool {
        !matches!(self, ProcessSpec::RandomWalk { .. })
    }

    /// Cheap analytic parameter checks (no simulation).
    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessSpec::RandomWalk { .. } | ProcessSpec::FullRegeneration => Ok(()),
            ProcessSpec::LinearProcess { coefficients, tail_tol, .. } => {
                coefficients.truncation_index(*tail_tol).map(|_| ())
            }
            ProcessSpec::Tar { a1, a2, .. } => check_tar(*a1, *a2),
            ProcessSpec::Arch { a1, a2, dist, .. } => check_arch(*a1, *a2, *dist),
            ProcessSpec::MixingAr { rho, .. } => check_ar(*rho),
            ProcessSpec::SplitChainAr { rho, small_set_half_width } => {
                GaussianAr1Chain::new(*rho, *small_set_half_width).map(|_| ())
            }
        }
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<Path> {
        match self {
            ProcessSpec::RandomWalk { dist } => gen_random_walk(n, *dist, seed),
            ProcessSpec::LinearProcess { coefficients, dist, tail_tol } => {
                gen_linear_process(n, coefficients, *dist, *tail_tol, seed)
            }
            ProcessSpec::Tar { a1, a2, dist, burn_in } => tar_path(n, *a1, *a2, *dist, *burn_in, seed),
            ProcessSpec::Arch { a1, a2, dist, burn_in } => {
                arch_path(n, *a1, *a2, *dist, *burn_in, seed)
            }
            ProcessSpec::MixingAr { rho, dist, burn_in } => {
                mixing_ar_path(n, *rho, *dist, *burn_in, seed)
            }
            ProcessSpec::SplitChainAr { rho, small_set_half_width } => {
                let chain = GaussianAr1Chain::new(*rho, *small_set_half_width)?;
                gen_split_chain(n, &chain, seed).map(|(p, _)| p)
            }
            ProcessSpec::FullRegeneration => {
                gen_split_chain(n, &FullRegenerationChain, seed).map(|(p, _)| p)
            }
        }
    }
}

/// A simulated trajectory `x_1..x_n` with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub values: Vec<f64>,
    pub kind: ProcessKind,
    pub params: ProcessSpec,
    pub seed: u64,
}

impl Path {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    fn new(values: Vec<f64>, params: ProcessSpec, seed: u64) -> Self {
        Path { kind: params.kind(), values, params, seed }
    }
}

fn require_len(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::invalid("path length n must be at least 1"))
    } else {
        Ok(())
    }
}

/// Partial sums `x_t = sum_{j <= t} e_j`.
pub fn random_walk_from_increments(increments: &[f64]) -> Vec<f64> {
    increments
        .iter()
        .scan(0.0, |acc, e| {
            *acc += e;
            Some(*acc)
        })
        .collect()
}

pub fn gen_random_walk(n: usize, dist: InnovationDist, seed: u64) -> Result<Path> {
    require_len(n)?;
    let mut rng = rng_from_seed(seed);
    let eps = dist.sample_n(n, &mut rng);
    Ok(Path::new(random_walk_from_increments(&eps), ProcessSpec::RandomWalk { dist }, seed))
}

/// Truncated MA(infinity): `x_t = sum_{k=0}^{K} phi_k e_{t-k}` with `K` the
/// truncation index for `tail_tol`. `K` pre-sample innovations are drawn
/// first so that `x_1` already has the stationary (truncated) law.
pub fn gen_linear_process(
    n: usize,
    coefficients: &Coefficients,
    dist: InnovationDist,
    tail_tol: f64,
    seed: u64,
) -> Result<Path> {
    require_len(n)?;
    let k = coefficients.truncation_index(tail_tol)?;
    let phi: Vec<f64> = (0..=k).map(|j| coefficients.get(j)).collect();
    let mut rng = rng_from_seed(seed);
    let eps = dist.sample_n(n + k, &mut rng);
    let values = (0..n)
        .map(|t| phi.iter().enumerate().map(|(j, p)| p * eps[t + k - j]).sum())
        .collect();
    Ok(Path::new(
        values,
        ProcessSpec::LinearProcess { coefficients: coefficients.clone(), dist, tail_tol },
        seed,
    ))
}

fn check_tar(a1: f64, a2: f64) -> Result<()> {
    let l = a1.abs().max(a2.abs());
    if !l.is_finite() || l >= 1.0 {
        return Err(Error::invalid(format!(
            "TAR contraction violated: need E log L_eps < 0 and E L_eps^2 < 1 with \
             L_eps = max(|a1|, |a2|) = {l}, which requires max(|a1|, |a2|) < 1"
        )));
    }
    Ok(())
}

fn check_arch(a1: f64, a2: f64, _dist: InnovationDist) -> Result<()> {
    if !(a1 > 0.0) || !a1.is_finite() {
        return Err(Error::invalid(format!("ARCH requires a1 > 0 (got {a1})")));
    }
    // Innovations have unit variance, so E L_eps^2 = a2^2.
    if !(a2 * a2 < 1.0) {
        return Err(Error::invalid(format!(
            "ARCH variance condition violated: E L_eps^2 = a2^2 E eps^2 = {} must be < 1",
            a2 * a2
        )));
    }
    Ok(())
}

fn check_ar(rho: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid(format!("AR(1) requires |rho| < 1 (got {rho})")));
    }
    Ok(())
}

fn iterate_map(
    n: usize,
    burn_in: usize,
    dist: InnovationDist,
    rng: &mut SimRng,
    map: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let mut x = 0.0;
    for _ in 0..burn_in {
        x = map(x, dist.sample(rng));
    }
    (0..n)
        .map(|_| {
            x = map(x, dist.sample(rng));
            x
        })
        .collect()
}

/// Threshold AR with threshold 0:
/// `x_k = a1 x_{k-1} 1{x_{k-1} < 0} + a2 x_{k-1} 1{x_{k-1} >= 0} + e_k`.
pub fn gen_tar(n: usize, a1: f64, a2: f64, dist: InnovationDist, seed: u64) -> Result<Path> {
    tar_path(n, a1, a2, dist, DEFAULT_BURN_IN, seed)
}

fn tar_path(n: usize, a1: f64, a2: f64, dist: InnovationDist, burn_in: usize, seed: u64) -> Result<Path> {
    require_len(n)?;
    check_tar(a1, a2)?;
    let mut rng = rng_from_seed(seed);
    let values = iterate_map(n, burn_in, dist, &mut rng, |x, e| {
        if x < 0.0 {
            a1 * x + e
        } else {
            a2 * x + e
        }
    });
    Ok(Path::new(values, ProcessSpec::Tar { a1, a2, dist, burn_in }, seed))
}

/// ARCH(1): `x_k = e_k sqrt(a1^2 + a2^2 x_{k-1}^2)`.
pub fn gen_arch(n: usize, a1: f64, a2: f64, dist: InnovationDist, seed: u64) -> Result<Path> {
    arch_path(n, a1, a2, dist, DEFAULT_BURN_IN, seed)
}

fn arch_path(n: usize, a1: f64, a2: f64, dist: InnovationDist, burn_in: usize, seed: u64) -> Result<Path> {
    require_len(n)?;
    check_arch(a1, a2, dist)?;
    let mut rng = rng_from_seed(seed);
    let (a1s, a2s) = (a1 * a1, a2 * a2);
    let values = iterate_map(n, burn_in, dist, &mut rng, |x, e| e * (a1s + a2s * x * x).sqrt());
    Ok(Path::new(values, ProcessSpec::Arch { a1, a2, dist, burn_in }, seed))
}

/// Stationary AR(1) `x_t = rho x_{t-1} + e_t`. Gaussian innovations start
/// from the exact stationary law; other laws use a burn-in.
pub fn gen_mixing_ar(n: usize, rho: f64, dist: InnovationDist, seed: u64) -> Result<Path> {
    mixing_ar_path(n, rho, dist, DEFAULT_BURN_IN, seed)
}

fn mixing_ar_path(n: usize, rho: f64, dist: InnovationDist, burn_in: usize, seed: u64) -> Result<Path> {
    require_len(n)?;
    check_ar(rho)?;
    let mut rng = rng_from_seed(seed);
    let values = if dist == InnovationDist::Gaussian {
        let mut x = dist.sample(&mut rng) / (1.0 - rho * rho).sqrt();
        (0..n)
            .map(|_| {
                x = rho * x + dist.sample(&mut rng);
                x
            })
            .collect()
    } else {
        iterate_map(n, burn_in, dist, &mut rng, |x, e| rho * x + e)
    };
    Ok(Path::new(values, ProcessSpec::MixingAr { rho, dist, burn_in }, seed))
}

/// Numerically evaluated contraction conditions `E log L_eps < 0` and
/// `E L_eps^2 < 1` for the iterated-random-function generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    pub mean_log_lipschitz: f64,
    pub mean_sq_lipschitz: f64,
    pub draws: usize,
}

impl ContractionReport {
    pub fn passes(&self) -> bool {
        self.mean_log_lipschitz < 0.0 && self.mean_sq_lipschitz < 1.0
    }
}

const CONTRACTION_DRAWS: usize = 1_000_000;
const CONTRACTION_SEED: u64 = 0x5EED_C0DE;

/// Monte Carlo contraction diagnostics. `None` for processes that are not
/// iterated random functions.
pub fn contraction_diagnostics(spec: &ProcessSpec) -> Option<ContractionReport> {
    let (dist, lipschitz): (InnovationDist, Box<dyn Fn(f64) -> f64>) = match *spec {
        ProcessSpec::Tar { a1, a2, dist, .. } => {
            let l = a1.abs().max(a2.abs());
            (dist, Box::new(move |_e| l))
        }
        ProcessSpec::Arch { a2, dist, .. } => (dist, Box::new(move |e: f64| a2.abs() * e.abs())),
        _ => return None,
    };
    let mut rng = rng_from_seed(CONTRACTION_SEED);
    let (mut log_sum, mut sq_sum) = (0.0, 0.0);
    for _ in 0..CONTRACTION_DRAWS {
        let l = lipschitz(dist.sample(&mut rng));
        log_sum += l.ln();
        sq_sum += l * l;
    }
    Some(ContractionReport {
        mean_log_lipschitz: log_sum / CONTRACTION_DRAWS as f64,
        mean_sq_lipschitz: sq_sum / CONTRACTION_DRAWS as f64,
        draws: CONTRACTION_DRAWS,
    })
}
