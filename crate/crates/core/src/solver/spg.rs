use super::projection::Polytope;
use crate::error::{Error, Result};

/// Smooth concave objective to be maximized.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], g: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpgOptions {
    /// Stop when `|P(x + g) - x|_inf` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Non-monotone memory of the line search.
    pub memory: usize,
    pub armijo: f64,
}

impl Default for SpgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
            memory: 10,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpgOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub pg_norm: f64,
    pub converged: bool,
    /// The search direction was lost to rounding before reaching `tol`.
    pub stalled: bool,
}

fn inf_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Projected-gradient norm `|P(x + g) - x|_inf`.
pub fn projected_gradient_norm(set: &Polytope, x: &[f64], g: &[f64]) -> Result<f64> {
    let y: Vec<f64> = x.iter().zip(g).map(|(a, b)| a + b).collect();
    Ok(inf_diff(&set.project(&y)?, x))
}

/// Spectral projected gradient ascent with a non-monotone Armijo search.
/// The objective must be concave.
pub fn maximize(
    obj: &dyn Objective,
    set: &Polytope,
    x0: &[f64],
    opts: &SpgOptions,
) -> Result<SpgOutcome> {
    let n = x0.len();
    let mut x = set.project(x0)?;
    let mut f = obj.value(&x);
    if !f.is_finite() {
        return Err(Error::Model(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut g = vec![0.0; n];
    obj.gradient(&x, &mut g);
    let mut pg = projected_gradient_norm(set, &x, &g)?;
    let mut alpha = if pg > 0.0 {
        (1.0 / pg).clamp(1e-12, 1e12)
    } else {
        1.0
    };
    let mut history = vec![f];
    let mut gn = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut iterations = 0;
    let mut retries = 0;
    let mut stalled = false;
    while iterations < opts.max_iter {
        if pg <= opts.tol {
            return Ok(SpgOutcome {
                x,
                value: f,
                iterations,
                pg_norm: pg,
                converged: true,
                stalled: false,
            });
        }
        iterations += 1;
        for k in 0..n {
            y[k] = x[k] + alpha * g[k];
        }
        let trial = set.project(&y)?;
        let d: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let gd: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if gd <= 0.0 {
            // projection noise dominates; fall back to the unit-step test
            pg = projected_gradient_norm(set, &x, &g)?;
            retries += 1;
            if retries > 12 || alpha <= 1e-12 {
                stalled = true;
                break;
            }
            alpha = (alpha * 0.1).max(1e-12);
            continue;
        }
        retries = 0;
        let fmax = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut t = 1.0;
        let mut xn: Vec<f64>;
        let mut fnew;
        loop {
            xn = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            fnew = obj.value(&xn);
            if fnew.is_finite() {
                if fnew >= fmax + opts.armijo * t * gd {
                    obj.gradient(&xn, &mut gn);
                    break;
                }
                // concavity gives f(xn) - f(x) >= t g(xn).d, which stays exact
                // when the value difference is lost to rounding
                obj.gradient(&xn, &mut gn);
                let slope: f64 = gn.iter().zip(&d).map(|(a, b)| a * b).sum();
                if slope >= opts.armijo * gd {
                    break;
                }
            }
            if t < 1e-16 {
                obj.gradient(&xn, &mut gn);
                break;
            }
            // safeguarded quadratic interpolation
            let tq = if fnew.is_finite() {
                0.5 * gd * t * t / (gd * t - (fnew - f))
            } else {
                0.1 * t
            };
            t = if tq > 0.1 * t && tq < 0.9 * t {
                tq
            } else {
                0.5 * t
            };
        }
        let mut ss = 0.0;
        let mut sy = 0.0;
        for k in 0..n {
            let s = xn[k] - x[k];
            ss += s * s;
            sy -= s * (gn[k] - g[k]);
        }
        alpha = if sy > 0.0 {
            (ss / sy).clamp(1e-12, 1e12)
        } else {
            (10.0 * alpha).min(1e12)
        };
        x = xn;
        f = fnew;
        std::mem::swap(&mut g, &mut gn);
        history.push(f);
        if history.len() > opts.memory {
            history.remove(0);
        }
        let step = d.iter().fold(0.0f64, |m, v| m.max(v.abs())) * t;
        if step <= opts.tol * 1e-2 || iterations % 10 == 0 {
            pg = projected_gradient_norm(set, &x, &g)?;
        } else {
            pg = f64::INFINITY;
        }
    }
    if !pg.is_finite() {
        pg = projected_gradient_norm(set, &x, &g)?;
    }
    let converged = pg <= opts.tol;
    Ok(SpgOutcome {
        x,
        value: f,
        iterations,
        pg_norm: pg,
        converged,
        stalled,
    })
}
