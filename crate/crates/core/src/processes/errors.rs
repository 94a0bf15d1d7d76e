use serde::{Deserialize, Serialize};

use super::{InnovationDist, Path};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Volatility map `sigma(x)` for endogenous errors `u_t = sigma(x_t) eta_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "map", rename_all = "kebab-case")]
pub enum VolatilityMap {
    /// `sigma = 1` (exogenous errors).
    #[default]
    Unit,
    /// `sigma(x) = level + amplitude * sin(x)`.
    Sine { level: f64, amplitude: f64 },
    /// `sigma(x) = intercept + slope * |x|`; unbounded unless `slope = 0`.
    Affine { intercept: f64, slope: f64 },
}

impl VolatilityMap {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            VolatilityMap::Unit => 1.0,
            VolatilityMap::Sine { level, amplitude } => level + amplitude * x.sin(),
            VolatilityMap::Affine { intercept, slope } => intercept + slope * x.abs(),
        }
    }

    /// Analytic `(inf, sup)` over the real line, when finite.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            VolatilityMap::Unit => Some((1.0, 1.0)),
            VolatilityMap::Sine { level, amplitude } => {
                Some((level - amplitude.abs(), level + amplitude.abs()))
            }
            VolatilityMap::Affine { intercept, slope } if slope == 0.0 => Some((intercept, intercept)),
            VolatilityMap::Affine { .. } => None,
        }
    }

    pub fn is_exogenous(&self) -> bool {
        matches!(self, VolatilityMap::Unit)
    }
}

/// Martingale-difference error specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    /// `p` in `sup_t E(|u_t|^{2p} | F_{t-1}) < inf`.
    pub moment_order: u32,
    pub dist: InnovationDist,
    pub volatility: VolatilityMap,
}

impl ErrorSpec {
    pub fn exogenous(moment_order: u32, dist: InnovationDist) -> Self {
        ErrorSpec { moment_order, dist, volatility: VolatilityMap::Unit }
    }

    pub fn validate(&self) -> Result<()> {
        if self.moment_order < 1 {
            return Err(Error::invalid("moment order p must be at least 1"));
        }
        match self.volatility.bounds() {
            Some((lo, hi)) if lo > 0.0 && hi.is_finite() => Ok(()),
            Some((lo, _)) => Err(Error::invalid(format!(
                "volatility map must be bounded below by a positive constant (inf = {lo})"
            ))),
            None => Err(Error::invalid("volatility map is unbounded")),
        }
    }
}

/// `u_t = sigma(x_t) eta_t` with `eta_t` i.i.d. from `spec.dist`, drawn
/// independently of the path. Conditional mean zero holds by construction.
pub fn gen_errors(path: &Path, spec: &ErrorSpec, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let (lo, hi) = spec.volatility.bounds().expect("validated");
    let sigma: Vec<f64> = path.values.iter().map(|&x| spec.volatility.eval(x)).collect();
    if let Some(bad) = sigma.iter().find(|s| !s.is_finite() || **s < lo || **s > hi || **s <= 0.0) {
        return Err(Error::invalid(format!(
            "volatility map left its bounds [{lo}, {hi}] along the path (value {bad})"
        )));
    }
    let mut rng = rng_from_seed(seed);
    Ok(sigma.iter().map(|s| s * spec.dist.sample(&mut rng)).collect())
}
