//! Kernel catalog. Every kernel is symmetric, nonnegative and Lipschitz;
//! the constants stored here are the exact analytic values.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelId {
    #[default]
    Epanechnikov,
    Triangular,
    Quartic,
    Gaussian,
}

impl KernelId {
    pub const ALL: [KernelId; 4] =
        [KernelId::Epanechnikov, KernelId::Triangular, KernelId::Quartic, KernelId::Gaussian];

    pub fn name(&self) -> &'static str {
        match self {
            KernelId::Epanechnikov => "epanechnikov",
            KernelId::Triangular => "triangular",
            KernelId::Quartic => "quartic",
            KernelId::Gaussian => "gaussian",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "epanechnikov" | "epa" => Ok(KernelId::Epanechnikov),
            "triangular" | "triangle" => Ok(KernelId::Triangular),
            "quartic" | "biweight" => Ok(KernelId::Quartic),
            "gaussian" | "normal" => Ok(KernelId::Gaussian),
            other => Err(Error::invalid(format!("unknown kernel `{other}`"))),
        }
    }

    pub fn kernel(self) -> Kernel {
        Kernel::new(self)
    }
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
// Beyond |s| = 40 the Gaussian density underflows to zero in f64.
const GAUSSIAN_EFFECTIVE_RADIUS: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub id: KernelId,
    pub sup_value: f64,
    pub lipschitz_const: f64,
    /// Lipschitz constant of `K^2`.
    pub squared_lipschitz_const: f64,
    /// `f64::INFINITY` for non-compact kernels.
    pub support_radius: f64,
    pub integral: f64,
    pub square_integral: f64,
}

impl Kernel {
    pub fn new(id: KernelId) -> Self {
        match id {
            KernelId::Epanechnikov => Kernel {
                id,
                sup_value: 0.75,
                lipschitz_const: 1.5,
                // max 2.25 s (1 - s^2) at s = 1/sqrt(3)
                squared_lipschitz_const: 2.25 * 2.0 / (3.0 * 3f64.sqrt()),
                support_radius: 1.0,
                integral: 1.0,
                square_integral: 0.6,
            },
            KernelId::Triangular => Kernel {
                id,
                sup_value: 1.0,
                lipschitz_const: 1.0,
                squared_lipschitz_const: 2.0,
                support_radius: 1.0,
                integral: 1.0,
                square_integral: 2.0 / 3.0,
            },
            KernelId::Quartic => Kernel {
                id,
                sup_value: 15.0 / 16.0,
                // max (15/4) s (1 - s^2) at s = 1/sqrt(3)
                lipschitz_const: 5.0 / (2.0 * 3f64.sqrt()),
                // max (225/32) s (1 - s^2)^3 at s = 1/sqrt(7)
                squared_lipschitz_const: 225.0 / 32.0 * (1.0 / 7f64.sqrt()) * (6.0f64 / 7.0).powi(3),
                support_radius: 1.0,
                integral: 1.0,
                square_integral: 5.0 / 7.0,
            },
            KernelId::Gaussian => Kernel {
                id,
                sup_value: INV_SQRT_2PI,
                // |phi'| peaks at s = 1
                lipschitz_const: INV_SQRT_2PI * (-0.5f64).exp(),
                // |2 phi phi'| = s e^{-s^2} / pi, peak at s = 1/sqrt(2)
                squared_lipschitz_const: std::f64::consts::FRAC_1_SQRT_2 * (-0.5f64).exp()
                    / std::f64::consts::PI,
                support_radius: f64::INFINITY,
                integral: 1.0,
                square_integral: 0.5 / std::f64::consts::PI.sqrt(),
            },
        }
    }

    pub fn is_compact(&self) -> bool {
        self.support_radius.is_finite()
    }

    /// Radius beyond which `eval` is exactly zero in floating point.
    pub fn effective_radius(&self) -> f64 {
        if self.is_compact() {
            self.support_radius
        } else {
            GAUSSIAN_EFFECTIVE_RADIUS
        }
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        match self.id {
            KernelId::Epanechnikov => {
                if s.abs() <= 1.0 {
                    0.75 * (1.0 - s * s)
                } else {
                    0.0
                }
            }
            KernelId::Triangular => {
                let a = s.abs();
                if a <= 1.0 {
                    1.0 - a
                } else {
                    0.0
                }
            }
            KernelId::Quartic => {
                if s.abs() <= 1.0 {
                    let v = 1.0 - s * s;
                    0.9375 * v * v
                } else {
                    0.0
                }
            }
            KernelId::Gaussian => INV_SQRT_2PI * (-0.5 * s * s).exp(),
        }
    }

    #[inline]
    pub fn eval_squared(&self, s: f64) -> f64 {
        let k = self.eval(s);
        k * k
    }

    /// Errors unless the kernel has compact support. Used by operations
    /// whose stationary identification or bias bound needs it.
    pub fn require_compact(&self, context: &str) -> Result<()> {
        if self.is_compact() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{context} requires a compactly supported kernel; `{}` has unbounded support",
                self.id.name()
            )))
        }
    }
}

/// Composite Simpson quadrature of `g` over `[a, b]` with `2m` panels.
pub fn simpson(g: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let n = 2 * m;
    let dx = (b - a) / n as f64;
    let mut acc = g(a) + g(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(a + i as f64 * dx);
    }
    acc * dx / 3.0
}

/// Diagnostic report for the boundedness / Lipschitz / integrability
/// conditions on `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelDiagnostics {
    pub bounded: bool,
    pub lipschitz_verified: bool,
    pub integrable: bool,
    pub compact_support: bool,
    pub worst_lipschitz_ratio: f64,
    pub sampled_max: f64,
    pub quadrature_integral: f64,
}

impl KernelDiagnostics {
    pub fn all_pass(&self) -> bool {
        self.bounded && self.lipschitz_verified && self.integrable
    }
}

const LIPSCHITZ_PAIRS: usize = 100_000;

pub fn check_assumption_2_2(kernel: &Kernel) -> KernelDiagnostics {
    let mut rng = rng_from_seed(0xC0FFEE);
    let span = kernel.effective_radius().min(8.0) * 1.25;
    let mut worst = 0.0f64;
    let mut sampled_max = 0.0f64;
    for i in 0..LIPSCHITZ_PAIRS {
        let x = rng.random_range(-span..span);
        // Mix close and distant pairs so steep regions are probed.
        let scale = if i % 2 == 0 { 1e-3 } else { span };
        let y = x + rng.random_range(-scale..scale);
        // Tiny gaps only measure rounding noise.
        if (x - y).abs() < 1e-6 {
            continue;
        }
        let (kx, ky) = (kernel.eval(x), kernel.eval(y));
        sampled_max = sampled_max.max(kx).max(ky);
        worst = worst.max((kx - ky).abs() / (x - y).abs());
    }
    let r = kernel.effective_radius().min(12.0);
    let quad = simpson(|s| kernel.eval(s), -r, r, 20_000);
    KernelDiagnostics {
        bounded: sampled_max <= kernel.sup_value && kernel.sup_value.is_finite(),
        lipschitz_verified: worst <= kernel.lipschitz_const * (1.0 + 1e-9),
        integrable: (quad - kernel.integral).abs() < 1e-6,
        compact_support: kernel.is_compact(),
        worst_lipschitz_ratio: worst,
        sampled_max,
        quadrature_integral: quad,
    }
}
