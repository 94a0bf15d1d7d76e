//! Nadaraya–Watson estimation for `y_t = m(x_t) + u_t` and its uniform
//! error over a grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::sums::{Grid, KernelSums};

/// Neighbourhood radius for the local Hölder envelope.
pub const HOLDER_EPS: f64 = 0.5;

/// Regression function catalog, each with an analytic local Hölder
/// envelope: `|m(y) - m(x)| <= C |y - x|^alpha g(x)` for `|y - x| <= 0.5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegressionFunction {
    /// `sum_j theta_j x^j`.
    Polynomial { coefficients: Vec<f64> },
    /// `alpha + beta sign(x) |x|^gamma` (odd extension of `x^gamma`).
    Power { alpha: f64, beta: f64, gamma: f64 },
    /// `x / (1 + theta x)` for `x >= 0`, zero otherwise.
    Rational { theta: f64 },
    /// `(alpha + beta e^x) / (1 + e^x)`.
    Logistic { alpha: f64, beta: f64 },
}

impl RegressionFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RegressionFunction::Polynomial { ref coefficients } if coefficients.is_empty() => {
                Err(Error::invalid("polynomial needs at least one coefficient"))
            }
            RegressionFunction::Power { gamma, .. } if !(gamma > 0.0) => {
                Err(Error::invalid("power function needs gamma > 0"))
            }
            RegressionFunction::Rational { theta } if !(theta > 0.0) => {
                Err(Error::invalid("rational function needs theta > 0"))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            RegressionFunction::Polynomial { ref coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            RegressionFunction::Power { alpha, beta, gamma } => alpha + beta * x.signum() * x.abs().powf(gamma),
            RegressionFunction::Rational { theta } => {
                if x >= 0.0 {
                    x / (1.0 + theta * x)
                } else {
                    0.0
                }
            }
            RegressionFunction::Logistic { alpha, beta } => {
                let s = if x >= 0.0 { 1.0 / (1.0 + (-x).exp()) } else { x.exp() / (1.0 + x.exp()) };
                alpha + (beta - alpha) * s
            }
        }
    }

    pub fn holder_exponent(&self) -> f64 {
        match *self {
            RegressionFunction::Power { gamma, .. } if gamma < 1.0 => gamma,
            _ => 1.0,
        }
    }

    pub fn holder_constant(&self) -> f64 {
        1.0
    }

    /// Envelope `g(x)`.
    pub fn envelope(&self, x: f64) -> f64 {
        let reach = x.abs() + HOLDER_EPS;
        match *self {
            RegressionFunction::Polynomial { ref coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, c)| j as f64 * c.abs() * reach.powi(j as i32 - 1))
                .sum(),
            RegressionFunction::Power { beta, gamma, .. } => {
                if gamma < 1.0 {
                    beta.abs() * 2f64.powf(1.0 - gamma)
                } else {
                    beta.abs() * gamma * reach.powf(gamma - 1.0)
                }
            }
            RegressionFunction::Rational { theta } => {
                if x + HOLDER_EPS < 0.0 {
                    0.0
                } else {
                    let lo = (x - HOLDER_EPS).max(0.0);
                    1.0 / (1.0 + theta * lo).powi(2)
                }
            }
            RegressionFunction::Logistic { alpha, beta } => (beta - alpha).abs() / 4.0,
        }
    }

    /// `delta = max_j g(y_j)` over the grid.
    pub fn envelope_sup(&self, points: &[f64]) -> f64 {
        points.iter().map(|&y| self.envelope(y)).fold(0.0, f64::max)
    }

    pub fn has_bounded_envelope(&self) -> bool {
        match self {
            RegressionFunction::Logistic { .. } | RegressionFunction::Rational { .. } => true,
            RegressionFunction::Power { gamma, .. } => *gamma <= 1.0,
            RegressionFunction::Polynomial { coefficients } => coefficients.len() <= 2,
        }
    }
}

/// Nadaraya–Watson fit on a grid. `estimates[j]` is `None` where the
/// kernel window is (numerically) empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NWFit {
    pub points: Vec<f64>,
    pub estimates: Vec<Option<f64>>,
    /// `sum_t K_h(x_t - y_j)`.
    pub denominators: Vec<f64>,
    /// `sum_t y_t K_h(x_t - y_j)`.
    pub numerators: Vec<f64>,
}

impl NWFit {
    pub fn defined_count(&self) -> usize {
        self.estimates.iter().filter(|e| e.is_some()).count()
    }

    pub fn undefined_fraction(&self) -> f64 {
        1.0 - self.defined_count() as f64 / self.estimates.len() as f64
    }
}

/// Kernel-weighted mean of `weights` at `x_t - y`. Weights are centred on
/// their first value before summing, so a constant sequence comes back
/// exactly.
struct KernelRatio {
    centre: f64,
    numerator: KernelSums,
    denominator: KernelSums,
    h: f64,
    floor: f64,
}

impl KernelRatio {
    fn new(x: &[f64], weights: &[f64], kernel: &Kernel, h: f64) -> Result<Self> {
        let centre = weights.first().copied().unwrap_or(0.0);
        let centred: Vec<f64> = weights.iter().map(|w| w - centre).collect();
        Ok(KernelRatio {
            centre,
            numerator: KernelSums::weighted(x, &centred, *kernel, h)?,
            denominator: KernelSums::plain(x, *kernel, h)?,
            h,
            floor: f64::EPSILON * x.len() as f64,
        })
    }

    /// `(numerator, denominator, ratio)` at `y`.
    fn at(&self, y: f64) -> (f64, f64, Option<f64>) {
        let num = self.numerator.at(-y) / self.h;
        let den = self.denominator.at(-y) / self.h;
        let est = (den >= self.floor && den > 0.0).then(|| self.centre + num / den);
        (self.centre * den + num, den, est)
    }
}

fn check_lengths(x: &[f64], other: &[f64], what: &str) -> Result<()> {
    if x.len() != other.len() {
        return Err(Error::invalid(format!(
            "{what} has length {} but the regressor has length {}",
            other.len(),
            x.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::invalid("empty sample"));
    }
    Ok(())
}

pub fn nw_fit(x: &[f64], y: &[f64], kernel: &Kernel, h: f64, grid: &Grid) -> Result<NWFit> {
    check_lengths(x, y, "response")?;
    let ratio = KernelRatio::new(x, y, kernel, h)?;
    let points = grid.points();
    let mut fit = NWFit {
        estimates: Vec::with_capacity(points.len()),
        denominators: Vec::with_capacity(points.len()),
        numerators: Vec::with_capacity(points.len()),
        points,
    };
    for &p in &fit.points {
        let (num, den, est) = ratio.at(p);
        fit.numerators.push(num);
        fit.denominators.push(den);
        fit.estimates.push(est);
    }
    if fit.defined_count() == 0 {
        return Err(Error::FitFailed(
            "kernel denominator vanishes at every grid point; the grid range exceeds the visited range".into(),
        ));
    }
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformError {
    pub sup_error: f64,
    pub argmax_index: usize,
    pub argmax_point: f64,
    pub undefined_fraction: f64,
}

pub fn uniform_error(fit: &NWFit, truth: &RegressionFunction) -> Result<UniformError> {
    let mut best: Option<(f64, usize)> = None;
    for (j, (est, &p)) in fit.estimates.iter().zip(&fit.points).enumerate() {
        if let Some(e) = est {
            let err = (e - truth.eval(p)).abs();
            if best.is_none_or(|(b, _)| err > b) {
                best = Some((err, j));
            }
        }
    }
    let (sup_error, argmax_index) =
        best.ok_or_else(|| Error::invalid("fit has no defined grid points"))?;
    Ok(UniformError {
        sup_error,
        argmax_index,
        argmax_point: fit.points[argmax_index],
        undefined_fraction: fit.undefined_fraction(),
    })
}

/// `m_hat - m = theta1 + theta2` with the noise part `theta1` and the
/// smoothing-bias part `theta2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorDecomposition {
    pub points: Vec<f64>,
    pub theta1: Vec<Option<f64>>,
    pub theta2: Vec<Option<f64>>,
    /// `m_hat(y_j) - m(y_j)` from the direct fit.
    pub total: Vec<Option<f64>>,
}

#[allow(clippy::too_many_arguments)]
pub fn error_decomposition(
    x: &[f64],
    y: &[f64],
    u: &[f64],
    truth: &RegressionFunction,
    kernel: &Kernel,
    h: f64,
    grid: &Grid,
) -> Result<ErrorDecomposition> {
    check_lengths(x, y, "response")?;
    check_lengths(x, u, "error sequence")?;
    for ((&xt, &yt), &ut) in x.iter().zip(y).zip(u) {
        let fitted = truth.eval(xt) + ut;
        if (yt - fitted).abs() > 1e-9 * (1.0 + yt.abs()) {
            return Err(Error::invalid("responses are not m(x_t) + u_t"));
        }
    }
    let fit = nw_fit(x, y, kernel, h, grid)?;
    let noise = KernelRatio::new(x, u, kernel, h)?;
    let mx: Vec<f64> = x.iter().map(|&v| truth.eval(v)).collect();
    let smooth = KernelRatio::new(x, &mx, kernel, h)?;
    let mut out = ErrorDecomposition {
        points: fit.points.clone(),
        theta1: Vec::with_capacity(fit.points.len()),
        theta2: Vec::with_capacity(fit.points.len()),
        total: Vec::with_capacity(fit.points.len()),
    };
    for (&p, est) in fit.points.iter().zip(&fit.estimates) {
        let m = truth.eval(p);
        let defined = est.is_some();
        out.theta1.push(noise.at(p).2.filter(|_| defined));
        out.theta2.push(smooth.at(p).2.filter(|_| defined).map(|v| v - m));
        out.total.push(est.map(|e| e - m));
    }
    Ok(out)
}

/// Bound `C (R h)^alpha g(y)` on the smoothing bias `|theta2(y)|` for a
/// compact kernel of radius `R`; needs `R h <= 0.5`.
pub fn bias_bound(truth: &RegressionFunction, kernel: &Kernel, h: f64, y: f64) -> Result<f64> {
    kernel.require_compact("the smoothing-bias bound")?;
    let reach = kernel.support_radius * h;
    if !(h > 0.0) || reach > HOLDER_EPS {
        return Err(Error::invalid(format!(
            "bias bound needs 0 < radius * h <= {HOLDER_EPS} (got {reach})"
        )));
    }
    Ok(truth.holder_constant() * reach.powf(truth.holder_exponent()) * truth.envelope(y))
}
