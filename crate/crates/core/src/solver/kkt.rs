use serde::{Deserialize, Serialize};

use super::projection::Polytope;
use super::spg::projected_gradient_norm;
use crate::error::Result;

const ACTIVE: f64 = 1e-6;

/// First-order optimality diagnostics of a maximization over a polytope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct KktResiduals {
    /// `|P(x + grad) - x|_inf`.
    pub stationarity: f64,
    /// Largest constraint violation.
    pub feasibility: f64,
    /// `max_r lambda_r |slack_r|` with multipliers fitted by NNLS.
    pub complementarity: f64,
}

/// Fits non-negative multipliers of the nearly active constraints to
/// `grad = sum lambda_r a_r` on the coordinates strictly inside the box, then
/// reports the residuals.
pub fn kkt_residuals(set: &Polytope, x: &[f64], grad: &[f64]) -> Result<(KktResiduals, Vec<f64>)> {
    let constraints = set.constraints();
    let band = 1e-7;
    let inside: Vec<bool> = x
        .iter()
        .map(|&v| v > set.lo + band && v < set.hi - band)
        .collect();
    let mut resid: Vec<f64> = grad
        .iter()
        .zip(&inside)
        .map(|(&g, &i)| if i { g } else { 0.0 })
        .collect();
    let norms: Vec<f64> = constraints
        .iter()
        .map(|c| {
            if c.rhs - c.lhs(x) > ACTIVE {
                0.0
            } else {
                c.coeffs
                    .iter()
                    .filter(|(k, _)| inside[*k])
                    .map(|(_, a)| a * a)
                    .sum()
            }
        })
        .collect();
    let mut lambda = vec![0.0; constraints.len()];
    for _ in 0..2000 {
        let mut moved = 0.0f64;
        for (r, c) in constraints.iter().enumerate() {
            if norms[r] == 0.0 {
                continue;
            }
            let dot: f64 = c
                .coeffs
                .iter()
                .filter(|(k, _)| inside[*k])
                .map(|&(k, a)| a * resid[k])
                .sum();
            let next = (lambda[r] + dot / norms[r]).max(0.0);
            let delta = next - lambda[r];
            if delta != 0.0 {
                for &(k, a) in &c.coeffs {
                    if inside[k] {
                        resid[k] -= delta * a;
                    }
                }
                lambda[r] = next;
                moved = moved.max(delta.abs());
            }
        }
        if moved < 1e-14 {
            break;
        }
    }
    let complementarity = constraints
        .iter()
        .zip(&lambda)
        .map(|(c, &l)| l * (c.rhs - c.lhs(x)).abs())
        .fold(0.0, f64::max);
    Ok((
        KktResiduals {
            stationarity: projected_gradient_norm(set, x, grad)?,
            feasibility: set.max_violation(x),
            complementarity,
        },
        lambda,
    ))
}
