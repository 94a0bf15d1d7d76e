use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Innovation law for the generators. Every variant is standardized to
/// mean 0 and variance 1, and has an absolutely integrable characteristic
/// function (so the random-walk local limit theory applies).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InnovationDist {
    #[default]
    Gaussian,
    Laplace,
    Logistic,
}

const LAPLACE_SCALE: f64 = std::f64::consts::FRAC_1_SQRT_2;
// sqrt(3) / pi
const LOGISTIC_SCALE: f64 = 0.551_328_895_421_792_1;

impl InnovationDist {
    pub const ALL: [InnovationDist; 3] =
        [InnovationDist::Gaussian, InnovationDist::Laplace, InnovationDist::Logistic];

    pub fn name(&self) -> &'static str {
        match self {
            InnovationDist::Gaussian => "gaussian",
            InnovationDist::Laplace => "laplace",
            InnovationDist::Logistic => "logistic",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(InnovationDist::Gaussian),
            "laplace" => Ok(InnovationDist::Laplace),
            "logistic" => Ok(InnovationDist::Logistic),
            other => Err(Error::invalid(format!(
                "unknown innovation distribution `{other}` (expected gaussian, laplace or logistic)"
            ))),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            InnovationDist::Gaussian => StandardNormal.sample(rng),
            InnovationDist::Laplace => {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<bool>() {
                    LAPLACE_SCALE * e
                } else {
                    -LAPLACE_SCALE * e
                }
            }
            InnovationDist::Logistic => {
                let u: f64 = Open01.sample(rng);
                LOGISTIC_SCALE * (u / (1.0 - u)).ln()
            }
        }
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// Characteristic function. All variants are symmetric, so it is real.
    pub fn characteristic_function(&self, t: f64) -> f64 {
        match self {
            InnovationDist::Gaussian => (-0.5 * t * t).exp(),
            InnovationDist::Laplace => 1.0 / (1.0 + LAPLACE_SCALE * LAPLACE_SCALE * t * t),
            InnovationDist::Logistic => {
                let a = std::f64::consts::PI * LOGISTIC_SCALE * t;
                if a.abs() < 1e-8 {
                    1.0
                } else if a.abs() > 700.0 {
                    0.0
                } else {
                    a / a.sinh()
                }
            }
        }
    }

    /// `∫ |φ(t)| dt` in closed form.
    pub fn char_fn_abs_integral(&self) -> f64 {
        use std::f64::consts::PI;
        match self {
            InnovationDist::Gaussian => (2.0 * PI).sqrt(),
            InnovationDist::Laplace => PI / LAPLACE_SCALE,
            // ∫ a/sinh(a) da = π²/2 over the real line, with a = π s t.
            InnovationDist::Logistic => PI / (2.0 * LOGISTIC_SCALE),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::stats::{mean, variance};

    #[test]
    fn standardized_moments() {
        let n = 1_000_000usize;
        for dist in InnovationDist::ALL {
            let mut rng = rng_from_seed(11);
            let xs = dist.sample_n(n, &mut rng);
            let m = mean(&xs);
            let v = variance(&xs);
            let fourth = xs.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64;
            // 5 sigma bounds: sd(mean) = 1/sqrt(n), sd(var) = sqrt((mu4 - 1)/n).
            assert!(m.abs() < 5.0 / (n as f64).sqrt(), "{dist:?} mean {m}");
            let var_sd = ((fourth - 1.0) / n as f64).sqrt();
            assert!((v - 1.0).abs() < 5.0 * var_sd, "{dist:?} variance {v}");
        }
    }

    #[test]
    fn characteristic_functions_integrable() {
        // Trapezoid over [-200, 200]; tails beyond are below 1e-4 for every law.
        for dist in InnovationDist::ALL {
            let steps = 400_000;
            let dt = 400.0 / steps as f64;
            let mut acc = 0.0;
            for i in 0..=steps {
                let t = -200.0 + i as f64 * dt;
                let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                acc += w * dist.characteristic_function(t).abs();
            }
            acc *= dt;
            let exact = dist.char_fn_abs_integral();
            assert!(exact.is_finite());
            // Laplace tail beyond 200 is 2 * 2/(200) ≈ 0.02 after scaling.
            let tol = if dist == InnovationDist::Laplace { 0.03 } else { 1e-6 };
            assert!((acc - exact).abs() < tol, "{dist:?}: {acc} vs {exact}");
        }
    }

    #[test]
    fn parse_round_trip() {
        for dist in InnovationDist::ALL {
            assert_eq!(InnovationDist::parse(dist.name()).unwrap(), dist);
        }
        assert!(InnovationDist::parse("uniform").is_err());
    }
}
