use super::projection::Polytope;
use super::{aggregate_utility, kkt_residuals, utility_gradient, ProgramSpec, SolveResult};
use crate::cost::{mcd_cost_from_hits, mcd_cost_gradient};
use crate::error::{Error, Result};

pub const ORACLE_MAX_VARS: usize = 6;

/// Coarse-to-fine exhaustive grid maximization over a polytope.
///
/// The first level enumerates a grid of 17 points per coordinate; each later
/// level halves the step and scans a 9-point window per coordinate around the
/// incumbent, until the step is at most `delta`. Returns the best point, its
/// value and the number of levels.
pub fn grid_search(
    set: &Polytope,
    value: &dyn Fn(&[f64]) -> f64,
    delta: f64,
) -> Result<(Vec<f64>, f64, usize)> {
    let dim = set.dim;
    if dim > ORACLE_MAX_VARS {
        return Err(Error::OracleRefused(dim));
    }
    if dim == 0 {
        return Ok((Vec::new(), value(&[]), 0));
    }
    if !(delta > 0.0) {
        return Err(Error::Parameter("grid step must be positive".into()));
    }
    let constraints = set.constraints();
    let prunable: Vec<_> = constraints
        .iter()
        .filter(|c| c.coeffs.iter().all(|&(_, a)| a >= 0.0))
        .collect();
    let feasible = |x: &[f64]| constraints.iter().all(|c| c.lhs(x) <= c.rhs);

    let mut step = (set.hi - set.lo) / 16.0;
    let mut axes: Vec<Vec<f64>> = vec![(0..=16).map(|k| set.lo + k as f64 * step).collect(); dim];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut levels = 0;
    loop {
        levels += 1;
        let mut x = vec![set.lo; dim];
        scan(0, &axes, &mut x, &prunable, &feasible, value, &mut best);
        let (centre, _) = best
            .clone()
            .ok_or_else(|| Error::Model("no feasible grid point".into()))?;
        if step <= delta {
            break;
        }
        step *= 0.5;
        axes = centre
            .iter()
            .map(|&c| {
                (-4..=4)
                    .map(|k| c + k as f64 * step)
                    .filter(|&v| v >= set.lo - 1e-15 && v <= set.hi + 1e-15)
                    .map(|v| v.clamp(set.lo, set.hi))
                    .collect()
            })
            .collect();
    }
    let (x, v) = best.expect("at least one level ran");
    Ok((x, v, levels))
}

fn scan(
    k: usize,
    axes: &[Vec<f64>],
    x: &mut Vec<f64>,
    prunable: &[&super::LinearConstraint],
    feasible: &dyn Fn(&[f64]) -> bool,
    value: &dyn Fn(&[f64]) -> f64,
    best: &mut Option<(Vec<f64>, f64)>,
) {
    if k == axes.len() {
        if feasible(x) {
            let v = value(x);
            if v.is_finite() && best.as_ref().is_none_or(|(_, b)| v > *b) {
                *best = Some((x.clone(), v));
            }
        }
        return;
    }
    let lo = x[k];
    for &v in &axes[k] {
        x[k] = v;
        // unassigned coordinates sit at the lower bound, so this is a valid prune
        if prunable.iter().any(|c| c.lhs(x) > c.rhs) {
            break;
        }
        scan(k + 1, axes, x, prunable, feasible, value, best);
    }
    x[k] = lo;
}

/// Exhaustive grid maximization of a program with at most six variables.
pub fn brute_force_oracle(prog: &ProgramSpec, delta: f64) -> Result<SolveResult> {
    let inst = prog.instance;
    let mut set = if prog.variant.is_cost() {
        super::build_polytope(inst, crate::analysis::Policy::Mcd, 0.0, prog.slack, true)
    } else {
        prog.polytope()
    };
    set.hi = set.hi.min(1.0 - prog.slack);
    let rates: Vec<f64> = inst.classes.iter().map(|c| c.rate).collect();
    let value = |x: &[f64]| -> f64 {
        if prog.variant.is_cost() {
            -mcd_cost_from_hits(&rates, &inst.unflatten(x), &prog.cost)
                .map(|b| b.total)
                .unwrap_or(f64::INFINITY)
        } else {
            aggregate_utility(inst, x)
        }
    };
    let (x, v, levels) = grid_search(&set, &value, delta)?;
    let mut g = vec![0.0; x.len()];
    if prog.variant.is_cost() {
        for c in 0..inst.num_classes() {
            let off = inst.offset(c);
            let len = inst.path_len(c);
            for (k, d) in mcd_cost_gradient(rates[c], &x[off..off + len], &prog.cost)
                .into_iter()
                .enumerate()
            {
                g[off + k] = -d;
            }
        }
    } else {
        utility_gradient(inst, &x, &mut g);
    }
    let (residuals, _) = kkt_residuals(&set, &x, &g)?;
    Ok(SolveResult {
        variant: prog.variant,
        hits: inst.unflatten(&x),
        objective: if prog.variant.is_cost() { -v } else { v },
        residuals,
        iterations: levels,
    })
}
