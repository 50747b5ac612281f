use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to hit probabilities before evaluating utilities that diverge at zero.
pub const DEFAULT_H_MIN: f64 = 1e-9;

/// Beta-fair utility family with a per-hop discount factor.
///
/// `U(h) = w h^(1-beta) / (1-beta)` for `beta != 1` and `w log h` for
/// `beta == 1`. A hit at position `l` of a path of length `L` is worth
/// `psi^(L-l) U(h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySpec {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_psi")]
    pub psi: f64,
    #[serde(default = "default_h_min")]
    pub h_min: f64,
}

fn default_beta() -> f64 {
    1.0
}
fn default_psi() -> f64 {
    1.0
}
fn default_h_min() -> f64 {
    DEFAULT_H_MIN
}

impl Default for UtilitySpec {
    fn default() -> Self {
        Self::log(1.0)
    }
}

impl UtilitySpec {
    pub fn log(psi: f64) -> Self {
        Self {
            beta: 1.0,
            psi,
            h_min: DEFAULT_H_MIN,
        }
    }

    pub fn beta_fair(beta: f64, psi: f64) -> Self {
        Self {
            beta,
            psi,
            h_min: DEFAULT_H_MIN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Parameter(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        if !(self.psi > 0.0 && self.psi <= 1.0) {
            return Err(Error::Parameter(format!(
                "psi must lie in (0, 1], got {}",
                self.psi
            )));
        }
        if !(self.h_min > 0.0 && self.h_min < 1.0) {
            return Err(Error::Parameter(format!(
                "h_min must lie in (0, 1), got {}",
                self.h_min
            )));
        }
        Ok(())
    }

    pub fn is_log(&self) -> bool {
        (self.beta - 1.0).abs() < 1e-12
    }

    /// Utility diverges at zero for `beta >= 1`.
    pub fn diverges_at_zero(&self) -> bool {
        self.beta >= 1.0 - 1e-12
    }

    /// Discount applied to a hit at 1-based `position` on a path of `path_len` caches.
    pub fn discount(&self, position: usize, path_len: usize) -> f64 {
        self.psi.powi((path_len - position) as i32)
    }

    pub fn value(&self, weight: f64, h: f64) -> Result<f64> {
        if h < 0.0 || (h == 0.0 && self.diverges_at_zero()) || h.is_nan() {
            return Err(Error::UtilityDomain { beta: self.beta, h });
        }
        Ok(self.value_unchecked(weight, h))
    }

    pub fn derivative(&self, weight: f64, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::UtilityDomain { beta: self.beta, h });
        }
        Ok(self.derivative_unchecked(weight, h))
    }

    /// Utility with `h` clamped to the configured floor.
    pub fn value_clamped(&self, weight: f64, h: f64) -> f64 {
        let h = if self.diverges_at_zero() {
            h.max(self.h_min)
        } else {
            h.max(0.0)
        };
        self.value_unchecked(weight, h)
    }

    pub fn derivative_clamped(&self, weight: f64, h: f64) -> f64 {
        self.derivative_unchecked(weight, h.max(self.h_min))
    }

    fn value_unchecked(&self, weight: f64, h: f64) -> f64 {
        if self.is_log() {
            weight * h.ln()
        } else {
            weight * h.powf(1.0 - self.beta) / (1.0 - self.beta)
        }
    }

    fn derivative_unchecked(&self, weight: f64, h: f64) -> f64 {
        if self.is_log() {
            weight / h
        } else if self.beta == 0.0 {
            weight
        } else {
            weight * h.powf(-self.beta)
        }
    }

    pub fn second_derivative_clamped(&self, weight: f64, h: f64) -> f64 {
        let h = h.max(self.h_min);
        -self.beta * weight * h.powf(-self.beta - 1.0)
    }

    /// Solves `U'(h) = marginal` for `h`. For `beta == 0` the marginal is
    /// constant, so the answer is `+inf` when `weight > marginal` and `0` otherwise.
    pub fn inverse_marginal(&self, weight: f64, marginal: f64) -> f64 {
        if marginal <= 0.0 {
            return f64::INFINITY;
        }
        if self.beta == 0.0 {
            return if weight > marginal {
                f64::INFINITY
            } else {
                0.0
            };
        }
        if self.is_log() {
            weight / marginal
        } else {
            (weight / marginal).powf(1.0 / self.beta)
        }
    }
}
