//! Per-coordinate momentum densities used by the Hamiltonian flow.
//!
//! The momentum density is a product `m(rho) = prod_i r(rho_i)` of a standard
//! univariate density `r`. The flow needs `r`'s CDF and quantile for the
//! deterministic refreshment, and `grad log m` for the position update.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{std_normal_cdf, std_normal_quantile, LN_2PI};

/// CDF outputs are kept inside `[CDF_CLAMP, 1 - CDF_CLAMP]`.
pub const CDF_CLAMP: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MomentumKind {
    #[default]
    Laplace,
    Gaussian,
}

impl std::str::FromStr for MomentumKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace" => Ok(Self::Laplace),
            "gaussian" | "normal" => Ok(Self::Gaussian),
            other => Err(Error::invalid(format!("unknown momentum kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumModel {
    pub kind: MomentumKind,
    pub dim: usize,
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(CDF_CLAMP, 1.0 - CDF_CLAMP)
}

impl MomentumModel {
    pub fn new(kind: MomentumKind, dim: usize) -> Self {
        Self { kind, dim }
    }

    pub fn laplace(dim: usize) -> Self {
        Self::new(MomentumKind::Laplace, dim)
    }

    pub fn gaussian(dim: usize) -> Self {
        Self::new(MomentumKind::Gaussian, dim)
    }

    /// Unclamped CDF of the standard univariate density.
    #[inline]
    pub(crate) fn cdf_raw(&self, v: f64) -> f64 {
        match self.kind {
            MomentumKind::Laplace => {
                if v < 0.0 {
                    0.5 * v.exp()
                } else {
                    1.0 - 0.5 * (-v).exp()
                }
            }
            MomentumKind::Gaussian => std_normal_cdf(v),
        }
    }

    /// Quantile without argument checks; `p` must lie in (0, 1).
    #[inline]
    pub(crate) fn quantile_raw(&self, p: f64) -> f64 {
        match self.kind {
            MomentumKind::Laplace => {
                if p < 0.5 {
                    (2.0 * p).ln()
                } else {
                    -(2.0 * (1.0 - p)).ln()
                }
            }
            MomentumKind::Gaussian => std_normal_quantile(p),
        }
    }

    /// Clamped CDF `R(v)`.
    pub fn cdf(&self, v: f64) -> Result<f64> {
        if v.is_nan() {
            return Err(Error::invalid("momentum CDF evaluated at NaN"));
        }
        Ok(clamp_prob(self.cdf_raw(v)))
    }

    /// Inverse CDF `R^{-1}(p)` for `p` in the open unit interval.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("quantile argument {p} outside (0, 1)")));
        }
        Ok(self.quantile_raw(p))
    }

    /// Univariate shift step of the refreshment, `R^{-1}((R(v) + shift) mod 1)`.
    #[inline]
    pub(crate) fn shift_through_cdf(&self, v: f64, shift: f64) -> f64 {
        let p = clamp_prob(self.cdf_raw(v)) + shift;
        let p = p - p.floor();
        self.quantile_raw(clamp_prob(p))
    }

    #[inline]
    pub fn logpdf_1d(&self, v: f64) -> f64 {
        match self.kind {
            MomentumKind::Laplace => -std::f64::consts::LN_2 - v.abs(),
            MomentumKind::Gaussian => -0.5 * LN_2PI - 0.5 * v * v,
        }
    }

    /// `d/dv log r(v)`; the Laplace kink at zero uses `sign(0) = 0`.
    #[inline]
    pub fn grad_logpdf_1d(&self, v: f64) -> f64 {
        match self.kind {
            MomentumKind::Laplace => {
                if v > 0.0 {
                    -1.0
                } else if v < 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            MomentumKind::Gaussian => -v,
        }
    }

    pub fn log_density(&self, rho: &[f64]) -> f64 {
        rho.iter().map(|&v| self.logpdf_1d(v)).sum()
    }

    /// Returns `log m(rho)` and `grad log m(rho)`.
    pub fn logpdf_grad(&self, rho: &[f64]) -> Result<(f64, Vec<f64>)> {
        if rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("momentum contains a non-finite component"));
        }
        let grad = rho.iter().map(|&v| self.grad_logpdf_1d(v)).collect();
        Ok((self.log_density(rho), grad))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim)
            .map(|_| match self.kind {
                MomentumKind::Laplace => {
                    // Inverse-CDF draw; the open interval keeps the log finite.
                    let p: f64 = rng.random();
                    self.quantile_raw(clamp_prob(p))
                }
                MomentumKind::Gaussian => rng.sample(StandardNormal),
            })
            .collect()
    }
}
