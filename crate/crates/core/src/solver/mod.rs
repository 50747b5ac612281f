//! Centralized solvers for the utility and cost programs over hit probabilities.

mod kkt;
mod oracle;
mod projection;
mod shared;
mod spg;

pub use kkt::{kkt_residuals, KktResiduals};
pub use oracle::{brute_force_oracle, grid_search, ORACLE_MAX_VARS};
pub use projection::{pav_nonincreasing, project_capped_sum, LinearConstraint, Polytope};
pub use shared::{shared_occupancy, solve_shared, SharedOptions, SharedSolution};
pub use spg::{maximize, projected_gradient_norm, Objective, SpgOptions, SpgOutcome};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::analysis::{Policy, FEASIBILITY_SLACK};
use crate::cost::{mcd_cost_from_hits, mcd_cost_gradient, CostSpec};
use crate::error::{Error, Result};
use crate::model::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Utility maximization on a single path under MCDP.
    LUMcdp,
    /// Utility maximization on a single path under MCD.
    LUMcd,
    /// Utility maximization on a general network without shared copies, MCDP.
    GNUMcdp,
    /// As above under MCD.
    GNUMcd,
    /// Minimization of search, fetch and transfer cost under MCD.
    McdCost,
}

impl Variant {
    pub fn policy(self) -> Policy {
        match self {
            Variant::LUMcdp | Variant::GNUMcdp => Policy::Mcdp,
            _ => Policy::Mcd,
        }
    }

    pub fn is_cost(self) -> bool {
        self == Variant::McdCost
    }

    pub fn is_line(self) -> bool {
        matches!(self, Variant::LUMcdp | Variant::LUMcd)
    }

    /// Utility variant for a policy on a given instance shape.
    pub fn utility(policy: Policy, line: bool) -> Self {
        match (policy, line) {
            (Policy::Mcdp, true) => Variant::LUMcdp,
            (Policy::Mcdp, false) => Variant::GNUMcdp,
            (Policy::Mcd, true) => Variant::LUMcd,
            (Policy::Mcd, false) => Variant::GNUMcd,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProgramSpec<'a> {
    pub variant: Variant,
    pub instance: &'a Instance,
    pub cost: CostSpec,
    /// Interior slack on the strict feasibility inequalities.
    pub slack: f64,
    pub options: SpgOptions,
}

impl<'a> ProgramSpec<'a> {
    pub fn new(variant: Variant, instance: &'a Instance) -> Self {
        Self {
            variant,
            instance,
            cost: CostSpec::default(),
            slack: FEASIBILITY_SLACK,
            options: SpgOptions::default(),
        }
    }

    pub fn with_cost(mut self, cost: CostSpec) -> Self {
        self.cost = cost;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.variant.is_line() && self.instance.network.paths.len() != 1 {
            return Err(Error::Parameter(format!(
                "{:?} needs a single path, the instance has {}",
                self.variant,
                self.instance.network.paths.len()
            )));
        }
        if !(self.slack > 0.0 && self.slack < 0.1) {
            return Err(Error::Parameter(format!(
                "slack must lie in (0, 0.1), got {}",
                self.slack
            )));
        }
        self.cost.validate()
    }

    pub fn lower_bound(&self) -> f64 {
        if !self.variant.is_cost() && self.instance.utility.diverges_at_zero() {
            self.instance.utility.h_min
        } else {
            0.0
        }
    }

    /// Feasible set of the program with per-node capacity constraints.
    pub fn polytope(&self) -> Polytope {
        build_polytope(
            self.instance,
            self.variant.policy(),
            self.lower_bound(),
            self.slack,
            true,
        )
    }
}

/// Feasible polytope: box, per-class budgets, optionally node capacities and,
/// for MCD, the ordering chain and `h_0 >= h_1`.
pub fn build_polytope(
    inst: &Instance,
    policy: Policy,
    lo: f64,
    slack: f64,
    capacity: bool,
) -> Polytope {
    let mut set = Polytope::boxed(inst.num_vars(), lo, 1.0);
    for c in 0..inst.num_classes() {
        let off = inst.offset(c);
        let len = inst.path_len(c);
        if policy == Policy::Mcd {
            set.add_mcd(off, len, 1.0 - slack, slack);
        } else {
            set.add_budget(off, len, 1.0 - slack);
        }
    }
    if capacity {
        for v in 0..inst.num_nodes() {
            let slots = inst.slots(v);
            if slots.is_empty() {
                continue;
            }
            let b = inst.capacity(v);
            if b >= slots.len() as f64 {
                warn!(
                    "capacity {b} at node {v} covers all {} slots; constraint is vacuous",
                    slots.len()
                );
            }
            set.add_group(slots.iter().map(|&(c, p)| inst.offset(c) + p).collect(), b);
        }
    }
    set
}

/// Discounted aggregate utility `sum psi^(|p|-l) U(h)` of a flat hit vector.
pub fn aggregate_utility(inst: &Instance, flat: &[f64]) -> f64 {
    let u = &inst.utility;
    let mut total = 0.0;
    for (c, class) in inst.classes.iter().enumerate() {
        let off = inst.offset(c);
        for pos in 0..inst.path_len(c) {
            total += inst.discount(c, pos) * u.value_clamped(class.weight, flat[off + pos]);
        }
    }
    total
}

pub(crate) fn utility_gradient(inst: &Instance, flat: &[f64], g: &mut [f64]) {
    let u = &inst.utility;
    for (c, class) in inst.classes.iter().enumerate() {
        let off = inst.offset(c);
        for pos in 0..inst.path_len(c) {
            g[off + pos] =
                inst.discount(c, pos) * u.derivative_clamped(class.weight, flat[off + pos]);
        }
    }
}

pub(crate) struct UtilityObjective<'a>(pub &'a Instance);

impl Objective for UtilityObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        aggregate_utility(self.0, x)
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        utility_gradient(self.0, x, g)
    }
}

struct NegCostObjective<'a> {
    inst: &'a Instance,
    rates: Vec<f64>,
    cost: CostSpec,
}

impl Objective for NegCostObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let rows = self.inst.unflatten(x);
        -mcd_cost_from_hits(&self.rates, &rows, &self.cost)
            .map(|b| b.total)
            .unwrap_or(f64::INFINITY)
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        for c in 0..self.inst.num_classes() {
            let off = self.inst.offset(c);
            let len = self.inst.path_len(c);
            let gc = mcd_cost_gradient(self.rates[c], &x[off..off + len], &self.cost);
            for (k, v) in gc.into_iter().enumerate() {
                g[off + k] = -v;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub variant: Variant,
    /// One row of hit probabilities per request class.
    pub hits: Vec<Vec<f64>>,
    /// Utility for utility programs, total cost for the cost program.
    pub objective: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
}

/// Interior starting point that respects budgets and capacities.
pub(crate) fn interior_start(inst: &Instance, lo: f64) -> Vec<f64> {
    let mut share = vec![f64::INFINITY; inst.num_nodes()];
    for (v, s) in share.iter_mut().enumerate() {
        let n = inst.slots(v).len();
        if n > 0 {
            *s = inst.capacity(v) / n as f64;
        }
    }
    let mut x = vec![0.0; inst.num_vars()];
    for c in 0..inst.num_classes() {
        let len = inst.path_len(c);
        for (pos, &v) in inst.path(c).nodes.iter().enumerate() {
            let h = (0.5 / len as f64).min(0.9 * share[v]) * (1.0 - 0.1 * pos as f64 / len as f64);
            x[inst.offset(c) + pos] = h.max(lo);
        }
    }
    x
}

/// Accepted ratio of the final projected-gradient norm to the tolerance when
/// progress is lost to rounding.
pub const PRECISION_FLOOR: f64 = 100.0;

fn finish(
    prog: &ProgramSpec,
    obj: &dyn Objective,
    set: &Polytope,
    out: SpgOutcome,
) -> Result<SolveResult> {
    let mut g = vec![0.0; out.x.len()];
    obj.gradient(&out.x, &mut g);
    let (residuals, _) = kkt_residuals(set, &out.x, &g)?;
    let floor = out.stalled && out.pg_norm <= PRECISION_FLOOR * prog.options.tol;
    if floor {
        warn!(
            "projected gradient stopped at the rounding floor: |pg| = {:.3e} after {} iterations",
            out.pg_norm, out.iterations
        );
    }
    if !out.converged && !floor {
        return Err(Error::NonConvergence {
            algorithm: "projected gradient",
            iterations: out.iterations,
            detail: format!(
                "stationarity {:.3e}, feasibility {:.3e}, complementarity {:.3e}",
                residuals.stationarity, residuals.feasibility, residuals.complementarity
            ),
        });
    }
    let objective = if prog.variant.is_cost() {
        -out.value
    } else {
        out.value
    };
    Ok(SolveResult {
        variant: prog.variant,
        hits: prog.instance.unflatten(&out.x),
        objective,
        residuals,
        iterations: out.iterations,
    })
}

/// Solves one of the utility programs.
pub fn solve(prog: &ProgramSpec) -> Result<SolveResult> {
    prog.validate()?;
    if prog.variant.is_cost() {
        return solve_mcd_cost(prog);
    }
    let set = prog.polytope();
    let obj = UtilityObjective(prog.instance);
    let x0 = interior_start(prog.instance, set.lo);
    let out = maximize(&obj, &set, &x0, &prog.options)?;
    finish(prog, &obj, &set, out)
}

/// Minimizes the MCD search + fetch + transfer cost over the MCD feasible set.
pub fn solve_mcd_cost(prog: &ProgramSpec) -> Result<SolveResult> {
    prog.validate()?;
    let mut set = build_polytope(prog.instance, Policy::Mcd, 0.0, prog.slack, true);
    set.lo = 0.0;
    let obj = NegCostObjective {
        inst: prog.instance,
        rates: prog.instance.classes.iter().map(|c| c.rate).collect(),
        cost: prog.cost,
    };
    let x0 = interior_start(prog.instance, 0.0);
    let out = maximize(&obj, &set, &x0, &prog.options)?;
    let mut spec = prog.clone();
    spec.variant = Variant::McdCost;
    finish(&spec, &obj, &set, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContentCatalog, UtilitySpec};

    #[test]
    fn proportional_fair_single_cache() {
        let cat = ContentCatalog::zipf(2, 1.0, 1.0).unwrap();
        let inst = Instance::line(&cat, vec![1.0], UtilitySpec::log(1.0)).unwrap();
        let r = solve(&ProgramSpec::new(Variant::LUMcdp, &inst)).unwrap();
        assert!((r.hits[0][0] - 2.0 / 3.0).abs() < 1e-6, "{:?}", r.hits);
        assert!((r.hits[1][0] - 1.0 / 3.0).abs() < 1e-6);
        assert!(r.residuals.feasibility <= 1e-8);
    }

    #[test]
    fn symmetric_two_by_two() {
        let cat = ContentCatalog::new(vec![1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let inst = Instance::line(&cat, vec![1.0, 1.0], UtilitySpec::log(1.0)).unwrap();
        let r = solve(&ProgramSpec::new(Variant::LUMcdp, &inst)).unwrap();
        for row in &r.hits {
            for &h in row {
                assert!((h - 0.5).abs() < 1e-6, "{:?}", r.hits);
            }
        }
    }

    #[test]
    fn single_content_saturates_budget() {
        let cat = ContentCatalog::new(vec![1.0], vec![1.0]).unwrap();
        let inst = Instance::line(&cat, vec![100.0, 100.0], UtilitySpec::log(0.5)).unwrap();
        let r = solve(&ProgramSpec::new(Variant::LUMcdp, &inst)).unwrap();
        let s: f64 = r.hits[0].iter().sum();
        assert!((s - (1.0 - FEASIBILITY_SLACK)).abs() < 1e-8, "{s}");
    }

    #[test]
    fn mcd_cost_single_cache_prefers_full_hits() {
        let cat = ContentCatalog::new(vec![1.0], vec![1.0]).unwrap();
        let inst = Instance::line(&cat, vec![1.0], UtilitySpec::log(1.0)).unwrap();
        let r = solve_mcd_cost(&ProgramSpec::new(Variant::McdCost, &inst)).unwrap();
        assert!(
            (r.hits[0][0] - (1.0 - FEASIBILITY_SLACK)).abs() < 1e-7,
            "{:?}",
            r.hits
        );
        assert!((r.objective - 2.0).abs() < 1e-6);
    }

    #[test]
    fn line_variant_rejects_networks() {
        use crate::model::{build_topology, TopologyKind, WeightRule, Workload};
        let net = build_topology(
            &TopologyKind::BinaryTree {
                depth: 2,
                disjoint_contents: false,
            },
            2,
            1.0,
        )
        .unwrap();
        let inst = Instance::new(
            net,
            2,
            &Workload::zipf(0.5),
            &WeightRule::Rate,
            UtilitySpec::log(1.0),
        )
        .unwrap();
        assert!(solve(&ProgramSpec::new(Variant::LUMcdp, &inst)).is_err());
        assert!(solve(&ProgramSpec::new(Variant::GNUMcdp, &inst)).is_ok());
    }
}
