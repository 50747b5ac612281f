use serde::{Deserialize, Serialize};

use super::{
    aggregate_utility, build_polytope, interior_start, maximize, utility_gradient, Objective,
    SpgOptions,
};
use crate::analysis::{Policy, FEASIBILITY_SLACK};
use crate::error::{Error, Result};
use crate::model::Instance;

/// Per node, the flat indices of each content's slots at that node.
pub(crate) fn content_groups(inst: &Instance) -> Vec<Vec<Vec<usize>>> {
    (0..inst.num_nodes())
        .map(|v| {
            let mut by_content: Vec<(usize, usize)> = inst
                .slots(v)
                .iter()
                .map(|&(c, p)| (inst.classes[c].content, inst.offset(c) + p))
                .collect();
            by_content.sort_unstable();
            let mut groups: Vec<Vec<usize>> = Vec::new();
            let mut last = usize::MAX;
            for (i, k) in by_content {
                if i != last {
                    groups.push(Vec::new());
                    last = i;
                }
                groups.last_mut().expect("pushed above").push(k);
            }
            groups
        })
        .collect()
}

/// Expected number of distinct contents at each node when paths share copies:
/// `sum_i (1 - prod_p (1 - h))`.
pub fn shared_occupancy(inst: &Instance, flat: &[f64]) -> Vec<f64> {
    content_groups(inst)
        .iter()
        .map(|groups| {
            groups
                .iter()
                .map(|g| 1.0 - g.iter().map(|&k| 1.0 - flat[k]).product::<f64>())
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharedOptions {
    pub policy: Policy,
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default = "default_feas")]
    pub feasibility_tol: f64,
    /// Accepted projected-gradient norm of the inner problems.
    #[serde(default = "default_stationarity")]
    pub stationarity_tol: f64,
    #[serde(default = "default_outer")]
    pub max_outer: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
}

fn default_slack() -> f64 {
    FEASIBILITY_SLACK
}
fn default_feas() -> f64 {
    1e-8
}
fn default_stationarity() -> f64 {
    1e-6
}
fn default_outer() -> usize {
    100
}
fn default_rho() -> f64 {
    10.0
}

impl Default for SharedOptions {
    fn default() -> Self {
        Self {
            policy: Policy::Mcdp,
            slack: default_slack(),
            feasibility_tol: default_feas(),
            stationarity_tol: default_stationarity(),
            max_outer: default_outer(),
            rho: default_rho(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedSolution {
    pub hits: Vec<Vec<f64>>,
    pub objective: f64,
    /// Capacity multipliers per node.
    pub nu: Vec<f64>,
    pub occupancy: Vec<f64>,
    pub feasibility: f64,
    pub outer_iterations: usize,
}

struct Augmented<'a> {
    inst: &'a Instance,
    groups: &'a [Vec<Vec<usize>>],
    nu: &'a [f64],
    rho: f64,
}

impl Augmented<'_> {
    fn excess(&self, x: &[f64]) -> Vec<f64> {
        self.groups
            .iter()
            .enumerate()
            .map(|(v, gs)| {
                gs.iter()
                    .map(|g| 1.0 - g.iter().map(|&k| 1.0 - x[k]).product::<f64>())
                    .sum::<f64>()
                    - self.inst.capacity(v)
            })
            .collect()
    }
}

impl Objective for Augmented<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let pen: f64 = self
            .excess(x)
            .iter()
            .zip(self.nu)
            .filter(|(_, &nu)| nu.is_finite())
            .map(|(&e, &nu)| ((nu + self.rho * e).max(0.0).powi(2) - nu * nu) / (2.0 * self.rho))
            .sum();
        aggregate_utility(self.inst, x) - pen
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        utility_gradient(self.inst, x, g);
        for (v, e) in self.excess(x).into_iter().enumerate() {
            let m = (self.nu[v] + self.rho * e).max(0.0);
            if m == 0.0 {
                continue;
            }
            for grp in &self.groups[v] {
                for &k in grp {
                    let others: f64 = grp
                        .iter()
                        .filter(|&&q| q != k)
                        .map(|&q| 1.0 - x[q])
                        .product();
                    g[k] -= m * others;
                }
            }
        }
    }
}

/// Centralized solve of the shared-copy utility program by an augmented
/// Lagrangian on the node occupancy constraints.
pub fn solve_shared(inst: &Instance, opts: &SharedOptions) -> Result<SharedSolution> {
    let lo = if inst.utility.diverges_at_zero() {
        inst.utility.h_min
    } else {
        0.0
    };
    let set = build_polytope(inst, opts.policy, lo, opts.slack, false);
    let groups = content_groups(inst);
    let mut nu = vec![0.0; inst.num_nodes()];
    let mut rho = opts.rho;
    let mut x = interior_start(inst, lo);
    let mut prev_violation = f64::INFINITY;
    let spg = SpgOptions {
        tol: 1e-9,
        ..SpgOptions::default()
    };
    for outer in 1..=opts.max_outer {
        let al = Augmented {
            inst,
            groups: &groups,
            nu: &nu,
            rho,
        };
        let out = maximize(&al, &set, &x, &spg)?;
        x = out.x;
        let excess = al.excess(&x);
        let violation = excess.iter().fold(0.0f64, |m, &e| m.max(e));
        let slackness = excess
            .iter()
            .zip(&nu)
            .map(|(e, n)| (n * e).abs())
            .fold(0.0, f64::max);
        for (n, e) in nu.iter_mut().zip(&excess) {
            *n = (*n + rho * e).max(0.0);
        }
        log::debug!("shared AL outer {outer}: violation {violation:.3e}, rho {rho:.1e}");
        if violation <= opts.feasibility_tol
            && slackness <= opts.feasibility_tol
            && (out.converged || out.pg_norm <= opts.stationarity_tol)
        {
            let occupancy = shared_occupancy(inst, &x);
            return Ok(SharedSolution {
                hits: inst.unflatten(&x),
                objective: aggregate_utility(inst, &x),
                nu,
                occupancy,
                feasibility: violation,
                outer_iterations: outer,
            });
        }
        if violation > 0.25 * prev_violation {
            rho = (rho * 10.0).min(1e10);
        }
        prev_violation = violation;
    }
    Err(Error::NonConvergence {
        algorithm: "augmented Lagrangian",
        iterations: opts.max_outer,
        detail: format!("occupancy violation {prev_violation:.3e}"),
    })
}
