//! Simulation and evaluation of kernel-weighted martingale functionals
//! `S_n(x) = sum_t u_t f[(x_t + x)/h]` and `V_n(x) = sum_t f^2[(x_t + x)/h]`
//! for stationary and null-recurrent regressors, with Nadaraya–Watson
//! regression on top and a Monte Carlo harness for empirical rate fits.

pub mod error;
pub mod experiments;
pub mod harris;
pub mod kernels;
pub mod processes;
pub mod regression;
pub mod rng;
pub mod stats;
pub mod sums;

pub use error::{Error, Result};
pub use kernels::{Kernel, KernelId};
pub use processes::{ErrorSpec, InnovationDist, Path, ProcessSpec};
pub use regression::RegressionFunction;
pub use sums::{BandwidthRule, Grid, GridSpec, NormalizationProfile, RangeRule, SpacingRule};
