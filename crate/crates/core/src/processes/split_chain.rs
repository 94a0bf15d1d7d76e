//! Nummelin splitting for chains satisfying `P(x, .) >= b 1_C(x) nu(.)`.
//!
//! Given the current state `x_t`, draw `Y_t ~ Bernoulli(b 1_C(x_t))`. On
//! `Y_t = 1` the next state comes from `nu`; otherwise from the residual
//! kernel `(P(x, .) - b 1_C(x) nu(.)) / (1 - b 1_C(x))`. The x-marginal is
//! the original chain, and the stretches between successive `Y = 1` times
//! are i.i.d.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Path, ProcessSpec};
use crate::error::{Error, Result};
use crate::harris::RegenRecord;
use crate::rng::{rng_from_seed, SimRng};
use crate::stats::normal_cdf;

/// A chain with an explicit minorization `(C, b, nu)`.
pub trait MinorizedChain: Sync {
    /// `b` in `P(x, .) >= b 1_C(x) nu(.)`.
    fn minorization_constant(&self) -> f64;
    fn in_small_set(&self, x: f64) -> bool;
    fn sample_nu(&self, rng: &mut SimRng) -> f64;
    fn sample_transition(&self, x: f64, rng: &mut SimRng) -> f64;
    /// Draw from the residual kernel at `x`. Returning a non-finite value
    /// signals a sampler failure.
    fn sample_residual(&self, x: f64, rng: &mut SimRng) -> f64;
    fn spec(&self) -> ProcessSpec;
}

fn std_normal(rng: &mut SimRng) -> f64 {
    StandardNormal.sample(rng)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

const MAX_REJECTIONS: usize = 1_000_000;

/// Gaussian AR(1) `x' = rho x + e`, small set `C = [-c, c]`.
///
/// For `|x| <= c` the transition density `phi(y - rho x)` is bounded below
/// by `phi(|y| + |rho| c)`, which integrates to `b = 2 (1 - Phi(|rho| c))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianAr1Chain {
    rho: f64,
    half_width: f64,
    shift: f64,
    b: f64,
}

impl GaussianAr1Chain {
    pub fn new(rho: f64, half_width: f64) -> Result<Self> {
        if !(rho.abs() < 1.0) {
            return Err(Error::invalid(format!("AR(1) split chain requires |rho| < 1 (got {rho})")));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::invalid("small-set half width must be positive and finite"));
        }
        let shift = rho.abs() * half_width;
        let b = 2.0 * (1.0 - normal_cdf(shift));
        Ok(Self { rho, half_width, shift, b })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Density of `nu` (used by tests).
    pub fn nu_density(&self, y: f64) -> f64 {
        std_normal_pdf(y.abs() + self.shift) / self.b
    }
}

impl MinorizedChain for GaussianAr1Chain {
    fn minorization_constant(&self) -> f64 {
        self.b
    }

    fn in_small_set(&self, x: f64) -> bool {
        x.abs() <= self.half_width
    }

    fn sample_nu(&self, rng: &mut SimRng) -> f64 {
        // |y| + shift is a standard normal conditioned to exceed `shift`.
        loop {
            let z = std_normal(rng).abs();
            if z > self.shift || self.shift == 0.0 {
                let mag = z - self.shift;
                return if rng.random::<bool>() { mag } else { -mag };
            }
        }
    }

    fn sample_transition(&self, x: f64, rng: &mut SimRng) -> f64 {
        self.rho * x + std_normal(rng)
    }

    fn sample_residual(&self, x: f64, rng: &mut SimRng) -> f64 {
        if !self.in_small_set(x) {
            return self.sample_transition(x, rng);
        }
        let mean = self.rho * x;
        for _ in 0..MAX_REJECTIONS {
            let y = mean + std_normal(rng);
            let accept = 1.0 - std_normal_pdf(y.abs() + self.shift) / std_normal_pdf(y - mean);
            if rng.random::<f64>() < accept {
                return y;
            }
        }
        f64::NAN
    }

    fn spec(&self) -> ProcessSpec {
        ProcessSpec::SplitChainAr { rho: self.rho, small_set_half_width: self.half_width }
    }
}

/// i.i.d. N(0, 1) chain: `P(x, .) = nu` for every `x`, so `b = 1` and
/// `C` is the whole line.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FullRegenerationChain;

impl MinorizedChain for FullRegenerationChain {
    fn minorization_constant(&self) -> f64 {
        1.0
    }
    fn in_small_set(&self, _x: f64) -> bool {
        true
    }
    fn sample_nu(&self, rng: &mut SimRng) -> f64 {
        std_normal(rng)
    }
    fn sample_transition(&self, _x: f64, rng: &mut SimRng) -> f64 {
        std_normal(rng)
    }
    fn sample_residual(&self, _x: f64, _rng: &mut SimRng) -> f64 {
        // The residual kernel is never used when b = 1 on C = R.
        f64::NAN
    }
    fn spec(&self) -> ProcessSpec {
        ProcessSpec::FullRegeneration
    }
}

/// Simulates `x_1..x_n` with `x_1 ~ nu` together with the split indicators
/// `Y_1..Y_n`. Times are 1-based, with `rho_0 = 0`.
pub fn gen_split_chain(n: usize, chain: &dyn MinorizedChain, seed: u64) -> Result<(Path, RegenRecord)> {
    if n == 0 {
        return Err(Error::invalid("path length n must be at least 1"));
    }
    let b = chain.minorization_constant();
    if !(b > 0.0 && b <= 1.0) {
        return Err(Error::invalid(format!("minorization constant b = {b} is outside (0, 1]")));
    }
    let mut rng = rng_from_seed(seed);
    let mut values = Vec::with_capacity(n);
    let mut indicators = Vec::with_capacity(n);
    let mut x = chain.sample_nu(&mut rng);
    for t in 0..n {
        values.push(x);
        let h = if chain.in_small_set(x) { b } else { 0.0 };
        let y = h > 0.0 && (h >= 1.0 || rng.random::<f64>() < h);
        indicators.push(y);
        if t + 1 < n {
            x = if y { chain.sample_nu(&mut rng) } else { chain.sample_residual(x, &mut rng) };
            if !x.is_finite() {
                return Err(Error::Internal(format!(
                    "residual kernel sampler returned a non-finite state at t = {}",
                    t + 2
                )));
            }
        }
    }
    let record = RegenRecord::from_indicators(indicators);
    let path = Path { kind: super::ProcessKind::SplitChain, values, params: chain.spec(), seed };
    Ok((path, record))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct BrokenChain;
    impl MinorizedChain for BrokenChain {
        fn minorization_constant(&self) -> f64 {
            0.5
        }
        fn in_small_set(&self, _x: f64) -> bool {
            false
        }
        fn sample_nu(&self, _rng: &mut SimRng) -> f64 {
            0.0
        }
        fn sample_transition(&self, _x: f64, _rng: &mut SimRng) -> f64 {
            0.0
        }
        fn sample_residual(&self, _x: f64, _rng: &mut SimRng) -> f64 {
            f64::INFINITY
        }
        fn spec(&self) -> ProcessSpec {
            ProcessSpec::FullRegeneration
        }
    }

    struct BadConstant(f64);
    impl MinorizedChain for BadConstant {
        fn minorization_constant(&self) -> f64 {
            self.0
        }
        fn in_small_set(&self, _x: f64) -> bool {
            true
        }
        fn sample_nu(&self, _rng: &mut SimRng) -> f64 {
            0.0
        }
        fn sample_transition(&self, _x: f64, _rng: &mut SimRng) -> f64 {
            0.0
        }
        fn sample_residual(&self, _x: f64, _rng: &mut SimRng) -> f64 {
            0.0
        }
        fn spec(&self) -> ProcessSpec {
            ProcessSpec::FullRegeneration
        }
    }

    #[test]
    fn full_regeneration_every_step() {
        let (path, rec) = gen_split_chain(100, &FullRegenerationChain, 3).unwrap();
        assert_eq!(path.len(), 100);
        assert!(rec.indicators().iter().all(|&y| y));
        assert_eq!(rec.count(), 100);
        assert_eq!(rec.times(), (1..=100).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn invalid_constant_and_broken_residual() {
        assert!(matches!(gen_split_chain(5, &BadConstant(0.0), 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(gen_split_chain(5, &BadConstant(1.5), 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(gen_split_chain(5, &BrokenChain, 1), Err(Error::Internal(_))));
    }

    #[test]
    fn ar1_minorization_constant_and_nu_density() {
        let chain = GaussianAr1Chain::new(0.5, 1.0).unwrap();
        assert!((chain.minorization_constant() - 2.0 * (1.0 - normal_cdf(0.5))).abs() < 1e-15);
        // nu integrates to one.
        let dy = 1e-3;
        let total: f64 = (-10_000..=10_000).map(|i| chain.nu_density(i as f64 * dy) * dy).sum();
        assert!((total - 1.0).abs() < 1e-3);
        // Minorization: phi(y - rho x) >= b nu(y) on C.
        for xi in -10..=10 {
            let x = xi as f64 / 10.0;
            for yi in -60..=60 {
                let y = yi as f64 / 10.0;
                let lhs = std_normal_pdf(y - 0.5 * x);
                assert!(lhs + 1e-15 >= chain.minorization_constant() * chain.nu_density(y));
            }
        }
    }

    #[test]
    fn regeneration_only_inside_small_set() {
        let chain = GaussianAr1Chain::new(0.5, 1.0).unwrap();
        let (path, rec) = gen_split_chain(5_000, &chain, 17).unwrap();
        for (x, &y) in path.values.iter().zip(rec.indicators()) {
            if y {
                assert!(x.abs() <= 1.0);
            }
        }
        assert!(rec.count() > 500);
    }
}
