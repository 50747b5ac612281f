//! Primal-dual algorithm for utility maximization with shared copies:
//! closed-form inner maximization of the Lagrangian by Gauss-Seidel sweeps
//! and scaled projected descent on the capacity and budget prices.

use std::io::Write;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::analysis::{Policy, FEASIBILITY_SLACK};
use crate::error::{Error, Result};
use crate::model::Instance;
use crate::solver::{aggregate_utility, shared_occupancy};

/// Floor restoring a multiplier pair that reached `(0, 0)`.
pub const REPAIR_FLOOR: f64 = 1e-12;

/// Inner sweeps that end with an update within this factor of the
/// tolerance are accepted.
const INNER_FLOOR: f64 = 1e3;

/// Prices below this that are pushed further down are set to zero.
const ZERO_PRICE: f64 = 1e-10;

/// Prices: `nu` per node (capacity) and `mu` per request class (budget).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub nu: Vec<f64>,
    pub mu: Vec<f64>,
}

impl DualState {
    pub fn uniform(inst: &Instance, nu: f64, mu: f64) -> Self {
        Self {
            nu: vec![nu; inst.num_nodes()],
            mu: vec![mu; inst.num_classes()],
        }
    }

    /// Whether every `(node, class)` pair has a positive price.
    pub fn in_region(&self, inst: &Instance) -> bool {
        self.nu
            .iter()
            .chain(&self.mu)
            .all(|&v| v >= 0.0 && v.is_finite())
            && (0..inst.num_classes()).all(|c| {
                inst.path(c)
                    .nodes
                    .iter()
                    .all(|&v| self.nu[v] + self.mu[c] > 0.0)
            })
    }

    /// Restores pairs at `(0, 0)` by lifting the class price to the floor.
    /// Returns the number of repairs.
    pub fn repair(&mut self, inst: &Instance) -> usize {
        let mut count = 0;
        for c in 0..inst.num_classes() {
            if self.mu[c] <= 0.0 && inst.path(c).nodes.iter().any(|&v| self.nu[v] <= 0.0) {
                self.mu[c] = REPAIR_FLOOR;
                count += 1;
            }
        }
        count
    }
}

/// Index structure of the shared-copy program.
struct Layout {
    /// Node of each flat coordinate.
    node: Vec<usize>,
    /// Flat coordinates of the same content at the same node on other paths.
    peers: Vec<Vec<usize>>,
    /// Budget coefficients per flat coordinate.
    coeff: Vec<f64>,
    /// Classes grouped by content; only classes in one group interact.
    by_content: Vec<Vec<usize>>,
    policy: Policy,
}

impl Layout {
    fn new(inst: &Instance, policy: Policy) -> Self {
        let n = inst.num_vars();
        let mut node = vec![0; n];
        let mut coeff = vec![1.0; n];
        for c in 0..inst.num_classes() {
            let off = inst.offset(c);
            for (p, &v) in inst.path(c).nodes.iter().enumerate() {
                node[off + p] = v;
            }
            if policy == Policy::Mcd && inst.path_len(c) >= 2 {
                coeff[off] = 2.0;
            }
        }
        let mut peers = vec![Vec::new(); n];
        for v in 0..inst.num_nodes() {
            let slots = inst.slots(v);
            for &(c, p) in slots {
                let k = inst.offset(c) + p;
                peers[k] = slots
                    .iter()
                    .filter(|&&(d, _)| d != c && inst.classes[d].content == inst.classes[c].content)
                    .map(|&(d, q)| inst.offset(d) + q)
                    .collect();
            }
        }
        let mut by_content = vec![Vec::new(); inst.n_contents];
        for (c, class) in inst.classes.iter().enumerate() {
            by_content[class.content].push(c);
        }
        by_content.retain(|g| !g.is_empty());
        Self {
            node,
            peers,
            coeff,
            by_content,
            policy,
        }
    }

    fn others(&self, h: &[f64], k: usize) -> f64 {
        self.peers[k].iter().map(|&q| 1.0 - h[q]).product()
    }
}

fn budget_coefficients(inst: &Instance, policy: Policy, c: usize) -> Vec<f64> {
    let mut a = vec![1.0; inst.path_len(c)];
    if policy == Policy::Mcd && a.len() >= 2 {
        a[0] = 2.0;
    }
    a
}

/// Lagrangian `sum psi U(h) - sum_j nu_j (occ_j - B_j) - sum_c mu_c (a.h_c - 1)`.
pub fn lagrangian(inst: &Instance, policy: Policy, h: &[f64], dual: &DualState) -> f64 {
    let occ = shared_occupancy(inst, h);
    let cap: f64 = occ
        .iter()
        .enumerate()
        .map(|(v, &o)| dual.nu[v] * (o - inst.capacity(v)))
        .sum();
    let budget: f64 = (0..inst.num_classes())
        .map(|c| {
            let off = inst.offset(c);
            let a = budget_coefficients(inst, policy, c);
            dual.mu[c]
                * (a.iter()
                    .enumerate()
                    .map(|(p, a)| a * h[off + p])
                    .sum::<f64>()
                    - 1.0)
        })
        .sum();
    aggregate_utility(inst, h) - cap - budget
}

/// `(dL/dnu, dL/dmu)` at `h`.
pub fn dual_gradients(inst: &Instance, policy: Policy, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let occ = shared_occupancy(inst, h);
    let g_nu = occ
        .iter()
        .enumerate()
        .map(|(v, &o)| -(o - inst.capacity(v)))
        .collect();
    let g_mu = (0..inst.num_classes())
        .map(|c| {
            let off = inst.offset(c);
            let a = budget_coefficients(inst, policy, c);
            -(a.iter()
                .enumerate()
                .map(|(p, a)| a * h[off + p])
                .sum::<f64>()
                - 1.0)
        })
        .collect();
    (g_nu, g_mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerOptions {
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_inner_tol")]
    pub tol: f64,
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn default_sweeps() -> usize {
    10_000
}
fn default_inner_tol() -> f64 {
    1e-12
}
fn default_slack() -> f64 {
    FEASIBILITY_SLACK
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            max_sweeps: default_sweeps(),
            tol: default_inner_tol(),
            slack: default_slack(),
        }
    }
}

/// Maximizer of a pooled block: `U'(h) = sum c / sum psi`.
fn pooled_value(inst: &Instance, weight: f64, price: f64, discount: f64) -> f64 {
    inst.utility.inverse_marginal(weight, price / discount)
}

/// Best response of one class to the current prices and the other classes.
fn class_response(
    inst: &Instance,
    layout: &Layout,
    dual: &DualState,
    h: &[f64],
    c: usize,
    slack: f64,
    out: &mut Vec<f64>,
) {
    let class = inst.classes[c];
    let off = inst.offset(c);
    let len = inst.path_len(c);
    let lo = if inst.utility.diverges_at_zero() {
        inst.utility.h_min
    } else {
        0.0
    };
    let hi = 1.0 - slack;
    out.clear();
    // (price, discount, count) blocks for the chain
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(len);
    let chain = if layout.policy == Policy::Mcd && len >= 3 {
        len - 1
    } else {
        0
    };
    for p in 0..len {
        let k = off + p;
        let price = dual.nu[layout.node[k]] * layout.others(h, k) + dual.mu[c] * layout.coeff[k];
        let disc = inst.discount(c, p);
        if p < chain {
            let mut block = (price, disc, 1usize);
            while let Some(&(bp, bd, bn)) = blocks.last() {
                let prev = pooled_value(inst, class.weight, bp, bd);
                let cur = pooled_value(inst, class.weight, block.0, block.1);
                if prev < cur {
                    block = (block.0 + bp, block.1 + bd, block.2 + bn);
                    blocks.pop();
                } else {
                    break;
                }
            }
            blocks.push(block);
        } else {
            blocks.push((price, disc, 1));
        }
    }
    for (price, disc, n) in blocks {
        let v = pooled_value(inst, class.weight, price, disc);
        let v = if v.is_nan() { hi } else { v.clamp(lo, hi) };
        out.extend(std::iter::repeat_n(v, n));
    }
}

/// Residual of the inner stationarity condition, taken over pools of equal
/// chained values and respecting the box bounds.
fn stationarity(inst: &Instance, layout: &Layout, dual: &DualState, h: &[f64], slack: f64) -> f64 {
    let lo = if inst.utility.diverges_at_zero() {
        inst.utility.h_min
    } else {
        0.0
    };
    let hi = 1.0 - slack;
    let mut worst = 0.0f64;
    for c in 0..inst.num_classes() {
        let class = inst.classes[c];
        let off = inst.offset(c);
        let len = inst.path_len(c);
        let chain = if layout.policy == Policy::Mcd && len >= 3 {
            len - 1
        } else {
            0
        };
        let mut p = 0;
        while p < len {
            let mut q = p + 1;
            if p < chain {
                while q < chain && h[off + q] == h[off + p] {
                    q += 1;
                }
            }
            let mut r = 0.0;
            let mut scale = 0.0;
            for j in p..q {
                let k = off + j;
                let price =
                    dual.nu[layout.node[k]] * layout.others(h, k) + dual.mu[c] * layout.coeff[k];
                let marginal =
                    inst.discount(c, j) * inst.utility.derivative_clamped(class.weight, h[k]);
                r += marginal - price;
                scale += marginal.abs() + price.abs();
            }
            let v = h[off + p];
            let r = if v <= lo {
                r.max(0.0)
            } else if v >= hi {
                (-r).max(0.0)
            } else {
                r.abs()
            };
            worst = worst.max(r / scale.max(1.0));
            p = q;
        }
    }
    worst
}

/// Maximizes the Lagrangian over `h` for fixed prices by Gauss-Seidel sweeps
/// over request classes, damped when a sweep grows the update. Returns the
/// number of sweeps.
pub fn inner_maximize(
    inst: &Instance,
    policy: Policy,
    dual: &DualState,
    h: &mut [f64],
    opts: &InnerOptions,
) -> Result<usize> {
    let layout = Layout::new(inst, policy);
    inner_with(inst, &layout, dual, h, opts)
}

fn inner_with(
    inst: &Instance,
    layout: &Layout,
    dual: &DualState,
    h: &mut [f64],
    opts: &InnerOptions,
) -> Result<usize> {
    let (sweeps, change) = sweep(inst, layout, dual, h, opts, opts.max_sweeps)?;
    if change <= INNER_FLOOR * opts.tol {
        if change > opts.tol {
            debug!("inner sweeps stopped at update {change:.3e}");
        }
        return Ok(sweeps);
    }
    Err(Error::NonConvergence {
        algorithm: "inner Gauss-Seidel",
        iterations: opts.max_sweeps,
        detail: format!("last update {change:.3e}"),
    })
}

/// Runs up to `limit` sweeps; returns the sweeps done and the last update size.
fn sweep(
    inst: &Instance,
    layout: &Layout,
    dual: &DualState,
    h: &mut [f64],
    opts: &InnerOptions,
    limit: usize,
) -> Result<(usize, f64)> {
    if !dual.in_region(inst) {
        return Err(Error::Parameter(
            "prices are outside the feasible multiplier region".into(),
        ));
    }
    let mut buf = Vec::new();
    let mut damping = 1.0;
    let mut last_change = f64::INFINITY;
    for n in 1..=limit {
        let mut change = 0.0f64;
        for group in &layout.by_content {
            for &c in group {
                class_response(inst, layout, dual, h, c, opts.slack, &mut buf);
                let off = inst.offset(c);
                for (p, &v) in buf.iter().enumerate() {
                    let next = h[off + p] + damping * (v - h[off + p]);
                    change = change.max((next - h[off + p]).abs());
                    h[off + p] = next;
                }
            }
        }
        if change <= opts.tol {
            return Ok((n, change));
        }
        if change > last_change && damping > 1.0 / 64.0 {
            damping *= 0.5;
        }
        last_change = change;
    }
    Ok((limit, last_change))
}

/// Closed-form log-utility inner solve; see [`inner_maximize`].
pub fn inner_maximize_log(
    inst: &Instance,
    policy: Policy,
    dual: &DualState,
    h: &mut [f64],
    opts: &InnerOptions,
) -> Result<usize> {
    if !inst.utility.is_log() {
        return Err(Error::Parameter(
            "the closed-form inner solve requires the log utility".into(),
        ));
    }
    inner_maximize(inst, policy, dual, h, opts)
}

/// Inner stationarity residual of `h` at the given prices.
pub fn inner_residual(
    inst: &Instance,
    policy: Policy,
    dual: &DualState,
    h: &[f64],
    slack: f64,
) -> f64 {
    stationarity(inst, &Layout::new(inst, policy), dual, h, slack)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimalDualOptions {
    /// Set from the experiment's policy rather than read from config.
    #[serde(skip, default = "default_policy")]
    pub policy: Policy,
    /// Base step; each price moves by `step / curvature` times its gradient.
    #[serde(default = "default_step")]
    pub step: f64,
    /// Multiply the base step by `1 / sqrt(k)`.
    #[serde(default = "default_decay")]
    pub decay: bool,
    #[serde(default = "default_nu0")]
    pub nu0: f64,
    #[serde(default = "default_nu0")]
    pub mu0: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Stop when the projected dual gradient is below this in max norm.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Iterations without improvement of the best gradient norm before giving up.
    #[serde(default = "default_stall")]
    pub stall: usize,
    /// Record the dual trajectory every this many iterations (0 disables).
    #[serde(default = "default_record")]
    pub record_every: usize,
    /// Gauss-Seidel sweeps of the primal update per price update.
    #[serde(default = "default_sweeps_per_step")]
    pub sweeps_per_step: usize,
    /// Return the feasibility-restored average of the primal iterates
    /// instead of an error when the prices do not settle.
    #[serde(default = "default_recover")]
    pub recover: bool,
    #[serde(default)]
    pub inner: InnerOptions,
}

fn default_policy() -> Policy {
    Policy::Mcdp
}
fn default_step() -> f64 {
    0.5
}
fn default_sweeps_per_step() -> usize {
    50
}
fn default_nu0() -> f64 {
    1.0
}
fn default_max_iter() -> usize {
    100_000
}
fn default_tol() -> f64 {
    1e-4
}
fn default_stall() -> usize {
    10_000
}
fn default_decay() -> bool {
    true
}
fn default_recover() -> bool {
    true
}
fn default_record() -> usize {
    1
}

impl Default for PrimalDualOptions {
    fn default() -> Self {
        Self {
            policy: default_policy(),
            step: default_step(),
            decay: default_decay(),
            nu0: default_nu0(),
            mu0: default_nu0(),
            max_iter: default_max_iter(),
            tol: default_tol(),
            stall: default_stall(),
            record_every: default_record(),
            sweeps_per_step: default_sweeps_per_step(),
            recover: default_recover(),
            inner: InnerOptions::default(),
        }
    }
}

/// Snapshot of the prices and residuals at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    pub iteration: usize,
    pub nu: Vec<f64>,
    pub mu: Vec<f64>,
    pub objective: f64,
    pub capacity_residual: f64,
    pub budget_residual: f64,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalDualResult {
    pub policy: Policy,
    /// One row per request class.
    pub hits: Vec<Vec<f64>>,
    pub objective: f64,
    pub dual: DualState,
    pub occupancy: Vec<f64>,
    /// Largest capacity and budget violations.
    pub capacity_violation: f64,
    pub budget_violation: f64,
    /// `max |nu (occ - B)|` and `max |mu (a.h - 1)|`.
    pub capacity_slackness: f64,
    pub budget_slackness: f64,
    pub inner_residual: f64,
    pub iterations: usize,
    /// False when the result is the recovered average of a run that did not settle.
    pub converged: bool,
    pub repairs: usize,
    /// Whether every iterate stayed in the multiplier region.
    pub always_in_region: bool,
    pub trajectory: Vec<DualPoint>,
}

fn projected_norm(dual: &DualState, g_nu: &[f64], g_mu: &[f64]) -> f64 {
    let proj = |v: f64, g: f64| {
        if v <= REPAIR_FLOOR {
            (-g).max(0.0)
        } else {
            g.abs()
        }
    };
    g_nu.iter()
        .zip(&dual.nu)
        .map(|(&g, &v)| proj(v, g))
        .chain(g_mu.iter().zip(&dual.mu).map(|(&g, &v)| proj(v, g)))
        .fold(0.0, f64::max)
}

/// Per-price step multiplier: halved when the gradient changes sign,
/// regrown slowly otherwise.
fn adapt(scale: &mut f64, prev: &mut f64, g: f64) -> f64 {
    if g * *prev < 0.0 {
        *scale = (*scale * 0.5).max(1e-6);
    } else {
        *scale = (*scale * 1.1).min(1.0);
    }
    *prev = g;
    *scale
}

/// Price after a descent move of `delta`, shrinking by at most half per
/// iteration and snapping to zero once negligible.
fn damped(price: f64, delta: f64) -> f64 {
    let next = price - delta;
    if next >= 0.5 * price {
        next
    } else if price <= ZERO_PRICE {
        0.0
    } else {
        0.5 * price
    }
}

/// `-(d occ / d nu, d load / d mu)` from the inner best response at `h`.
fn curvature(inst: &Instance, layout: &Layout, h: &[f64], slack: f64) -> (Vec<f64>, Vec<f64>) {
    let lo = if inst.utility.diverges_at_zero() {
        inst.utility.h_min
    } else {
        0.0
    };
    let hi = 1.0 - slack;
    let mut k_nu = vec![0.0; inst.num_nodes()];
    let mut k_mu = vec![0.0; inst.num_classes()];
    for c in 0..inst.num_classes() {
        let class = inst.classes[c];
        let off = inst.offset(c);
        for p in 0..inst.path_len(c) {
            let k = off + p;
            if h[k] <= lo || h[k] >= hi {
                continue;
            }
            let u2 = inst.discount(c, p)
                * inst
                    .utility
                    .second_derivative_clamped(class.weight, h[k])
                    .abs();
            if !(u2 > 0.0) {
                continue;
            }
            let pi = layout.others(h, k);
            k_nu[layout.node[k]] += pi * pi / u2;
            k_mu[c] += layout.coeff[k] * layout.coeff[k] / u2;
        }
    }
    (k_nu, k_mu)
}

/// Runs the primal-dual iteration from uniform prices `(nu0, mu0)` and the
/// capacity-proportional start `h0` unless one is given.
pub fn run_primal_dual(
    inst: &Instance,
    opts: &PrimalDualOptions,
    h0: Option<Vec<f64>>,
) -> Result<PrimalDualResult> {
    inst.utility.validate()?;
    if !(opts.step > 0.0) || !(opts.nu0 >= 0.0) || !(opts.mu0 >= 0.0) {
        return Err(Error::Parameter(
            "step must be positive and initial prices non-negative".into(),
        ));
    }
    let layout = Layout::new(inst, opts.policy);
    let mut dual = DualState::uniform(inst, opts.nu0, opts.mu0);
    let mut repairs = dual.repair(inst);
    let mut h = h0.unwrap_or_else(|| crate::online::uniform_start(inst, opts.inner.slack));
    if h.len() != inst.num_vars() {
        return Err(Error::Parameter(format!(
            "expected {} hit values, got {}",
            inst.num_vars(),
            h.len()
        )));
    }
    let mut trajectory = Vec::new();
    let mut always_in_region = true;
    let mut best = f64::INFINITY;
    let mut best_at = 0;
    let mut iterations = 0;
    let mut norm;
    let mut scale_nu = vec![1.0; dual.nu.len()];
    let mut scale_mu = vec![1.0; dual.mu.len()];
    let mut prev_nu = vec![0.0; dual.nu.len()];
    let mut prev_mu = vec![0.0; dual.mu.len()];
    let mut average = vec![0.0; h.len()];
    let mut samples = 0usize;
    let mut converged = false;
    loop {
        let (_, change) = sweep(
            inst,
            &layout,
            &dual,
            &mut h,
            &opts.inner,
            opts.sweeps_per_step,
        )?;
        let (g_nu, g_mu) = dual_gradients(inst, opts.policy, &h);
        norm = projected_norm(&dual, &g_nu, &g_mu);
        let settled = change <= INNER_FLOOR * opts.inner.tol;
        if opts.record_every > 0 && iterations % opts.record_every == 0 {
            trajectory.push(snapshot(inst, &dual, &h, &g_nu, &g_mu, iterations, norm));
        }
        if norm <= opts.tol && settled {
            converged = true;
            break;
        }
        if iterations.is_power_of_two() {
            average.copy_from_slice(&h);
            samples = 1;
        } else {
            average.iter_mut().zip(&h).for_each(|(a, x)| *a += x);
            samples += 1;
        }
        let failure = if norm < best * (1.0 - 1e-9) {
            best = norm;
            best_at = iterations;
            None
        } else if iterations - best_at >= opts.stall {
            Some(format!(
                "dual gradient stalled at {norm:.3e} (best {best:.3e})"
            ))
        } else {
            None
        };
        let failure = failure
            .or_else(|| (iterations >= opts.max_iter).then(|| format!("dual gradient {norm:.3e}")));
        if let Some(detail) = failure {
            if !opts.recover {
                return Err(Error::NonConvergence {
                    algorithm: "primal-dual",
                    iterations,
                    detail,
                });
            }
            warn!("primal-dual stopped after {iterations} iterations ({detail}); recovering the averaged primal");
            h = average.iter().map(|a| a / samples as f64).collect();
            restore_feasibility(inst, opts.policy, &mut h);
            break;
        }
        iterations += 1;
        let base = if opts.decay {
            opts.step / (iterations as f64).sqrt()
        } else {
            opts.step
        };
        let (k_nu, k_mu) = curvature(inst, &layout, &h, opts.inner.slack);
        let floor = |k: &[f64]| {
            let pos: Vec<f64> = k.iter().copied().filter(|&v| v > 0.0).collect();
            if pos.is_empty() {
                1.0
            } else {
                1e-3 * pos.iter().sum::<f64>() / pos.len() as f64
            }
        };
        let (f_nu, f_mu) = (floor(&k_nu), floor(&k_mu));
        for v in 0..dual.nu.len() {
            let s = adapt(&mut scale_nu[v], &mut prev_nu[v], g_nu[v]);
            dual.nu[v] = damped(dual.nu[v], s * base / k_nu[v].max(f_nu) * g_nu[v]);
        }
        for c in 0..dual.mu.len() {
            let s = adapt(&mut scale_mu[c], &mut prev_mu[c], g_mu[c]);
            dual.mu[c] = damped(dual.mu[c], s * base / k_mu[c].max(f_mu) * g_mu[c]);
        }
        if !dual.in_region(inst) {
            always_in_region = false;
        }
        let fixed = dual.repair(inst);
        if fixed > 0 {
            debug!("iteration {iterations}: restored {fixed} price pairs to the floor");
            repairs += fixed;
        }
        if !dual.in_region(inst) {
            return Err(Error::Model(
                "prices left the feasible multiplier region".into(),
            ));
        }
    }
    let (g_nu, g_mu) = dual_gradients(inst, opts.policy, &h);
    if opts.record_every > 0 && trajectory.last().is_none_or(|p| p.iteration != iterations) {
        trajectory.push(snapshot(inst, &dual, &h, &g_nu, &g_mu, iterations, norm));
    }
    let occupancy = shared_occupancy(inst, &h);
    let capacity_violation = g_nu.iter().map(|g| (-g).max(0.0)).fold(0.0, f64::max);
    let budget_violation = g_mu.iter().map(|g| (-g).max(0.0)).fold(0.0, f64::max);
    let capacity_slackness = g_nu
        .iter()
        .zip(&dual.nu)
        .map(|(g, n)| (g * n).abs())
        .fold(0.0, f64::max);
    let budget_slackness = g_mu
        .iter()
        .zip(&dual.mu)
        .map(|(g, m)| (g * m).abs())
        .fold(0.0, f64::max);
    if repairs > 0 {
        warn!("{repairs} price pairs were restored to the floor {REPAIR_FLOOR:e}");
    }
    Ok(PrimalDualResult {
        policy: opts.policy,
        hits: inst.unflatten(&h),
        objective: aggregate_utility(inst, &h),
        inner_residual: stationarity(inst, &layout, &dual, &h, opts.inner.slack),
        dual,
        occupancy,
        capacity_violation,
        budget_violation,
        capacity_slackness,
        budget_slackness,
        iterations,
        converged,
        repairs,
        always_in_region,
        trajectory,
    })
}

/// Scales each over-budget class and then every hit probability at each
/// over-full node down until both constraint families hold.
fn restore_feasibility(inst: &Instance, policy: Policy, h: &mut [f64]) {
    for c in 0..inst.classes.len() {
        let (o, len) = (inst.offset(c), inst.path_len(c));
        let coef = budget_coefficients(inst, policy, c);
        let load: f64 = coef.iter().zip(&h[o..o + len]).map(|(a, x)| a * x).sum();
        if load > 1.0 {
            h[o..o + len].iter_mut().for_each(|x| *x /= load);
        }
    }
    let occupancy = shared_occupancy(inst, h);
    for (v, &occ) in occupancy.iter().enumerate() {
        let cap = inst.capacity(v);
        if occ <= cap {
            continue;
        }
        let slots: Vec<usize> = (0..inst.classes.len())
            .flat_map(|c| {
                inst.path(c)
                    .nodes
                    .iter()
                    .position(|&u| u == v)
                    .map(|p| inst.offset(c) + p)
            })
            .collect();
        let original: Vec<f64> = slots.iter().map(|&k| h[k]).collect();
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..100 {
            let s = 0.5 * (lo + hi);
            slots.iter().zip(&original).for_each(|(&k, x)| h[k] = s * x);
            if shared_occupancy(inst, h)[v] <= cap {
                lo = s;
            } else {
                hi = s;
            }
        }
        slots
            .iter()
            .zip(&original)
            .for_each(|(&k, x)| h[k] = lo * x);
    }
}

fn snapshot(
    inst: &Instance,
    dual: &DualState,
    h: &[f64],
    g_nu: &[f64],
    g_mu: &[f64],
    iteration: usize,
    norm: f64,
) -> DualPoint {
    DualPoint {
        iteration,
        nu: dual.nu.clone(),
        mu: dual.mu.clone(),
        objective: aggregate_utility(inst, h),
        capacity_residual: g_nu.iter().map(|g| (-g).max(0.0)).fold(0.0, f64::max),
        budget_residual: g_mu.iter().map(|g| (-g).max(0.0)).fold(0.0, f64::max),
        gradient_norm: norm,
    }
}

#[derive(Serialize)]
struct DualRow {
    iteration: usize,
    node: Option<usize>,
    nu: Option<f64>,
    content: Option<usize>,
    path: Option<usize>,
    mu: Option<f64>,
    objective: f64,
    capacity_residual: f64,
    budget_residual: f64,
}

/// Long-format dual trajectory: one row per node price and per class price.
pub fn write_dual_csv<W: Write>(inst: &Instance, points: &[DualPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for pt in points {
        let row = |node, nu, content, path, mu| DualRow {
            iteration: pt.iteration,
            node,
            nu,
            content,
            path,
            mu,
            objective: pt.objective,
            capacity_residual: pt.capacity_residual,
            budget_residual: pt.budget_residual,
        };
        for (v, &nu) in pt.nu.iter().enumerate() {
            w.serialize(row(Some(v), Some(nu), None, None, None))?;
        }
        for (c, &mu) in pt.mu.iter().enumerate() {
            let class = inst.classes[c];
            w.serialize(row(
                None,
                None,
                Some(class.content),
                Some(class.path),
                Some(mu),
            ))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_topology, ContentCatalog, TopologyKind, UtilitySpec, WeightRule, Workload,
    };
    use crate::solver::{solve, solve_shared, ProgramSpec, SharedOptions, Variant};
    use proptest::prelude::*;

    fn tree(disjoint: bool, n: usize, cap: f64) -> Instance {
        let net = build_topology(
            &TopologyKind::BinaryTree {
                depth: 2,
                disjoint_contents: disjoint,
            },
            n,
            cap,
        )
        .unwrap();
        let total = if disjoint { 2 * n } else { n };
        Instance::new(
            net,
            total,
            &Workload::zipf(0.8),
            &WeightRule::Rate,
            UtilitySpec::log(0.6),
        )
        .unwrap()
    }

    #[test]
    fn no_overlap_has_the_closed_form() {
        let inst = tree(true, 3, 1.0);
        let dual = DualState {
            nu: vec![0.5, 0.7, 0.9],
            mu: vec![0.3; inst.num_classes()],
        };
        let mut h = vec![0.1; inst.num_vars()];
        let sweeps =
            inner_maximize_log(&inst, Policy::Mcdp, &dual, &mut h, &InnerOptions::default())
                .unwrap();
        assert!(sweeps <= 2);
        for c in 0..inst.num_classes() {
            for (p, &v) in inst.path(c).nodes.iter().enumerate() {
                let want = inst.classes[c].weight * inst.discount(c, p) / (dual.nu[v] + 0.3);
                assert!((h[inst.offset(c) + p] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_capacity_price_decouples_paths() {
        let inst = tree(false, 3, 1.0);
        let dual = DualState {
            nu: vec![0.0; 3],
            mu: vec![2.0; inst.num_classes()],
        };
        let mut h = vec![0.1; inst.num_vars()];
        inner_maximize_log(&inst, Policy::Mcdp, &dual, &mut h, &InnerOptions::default()).unwrap();
        for c in 0..inst.num_classes() {
            for p in 0..inst.path_len(c) {
                let want = inst.classes[c].weight * inst.discount(c, p) / 2.0;
                assert!((h[inst.offset(c) + p] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn region_repair() {
        let inst = tree(false, 2, 1.0);
        let mut dual = DualState::uniform(&inst, 0.0, 0.0);
        assert!(!dual.in_region(&inst));
        assert_eq!(dual.repair(&inst), inst.num_classes());
        assert!(dual.in_region(&inst));
    }

    #[test]
    fn single_path_matches_convex_solver() {
        let cat = ContentCatalog::zipf(10, 0.8, 1.0).unwrap();
        let inst = Instance::line(&cat, vec![2.0, 3.0], UtilitySpec::log(0.6)).unwrap();
        for (policy, variant) in [
            (Policy::Mcdp, Variant::LUMcdp),
            (Policy::Mcd, Variant::LUMcd),
        ] {
            let pd = run_primal_dual(
                &inst,
                &PrimalDualOptions {
                    policy,
                    ..Default::default()
                },
                None,
            )
            .unwrap();
            let cvx = solve(&ProgramSpec::new(variant, &inst)).unwrap();
            assert!(
                (pd.objective - cvx.objective).abs() < 1e-4,
                "{policy}: {} vs {}",
                pd.objective,
                cvx.objective
            );
            assert!(pd.always_in_region);
        }
    }

    #[test]
    fn disjoint_paths_match_path_solver() {
        let inst = tree(true, 4, 1.5);
        for (policy, variant) in [
            (Policy::Mcdp, Variant::GNUMcdp),
            (Policy::Mcd, Variant::GNUMcd),
        ] {
            let pd = run_primal_dual(
                &inst,
                &PrimalDualOptions {
                    policy,
                    tol: 1e-7,
                    ..Default::default()
                },
                None,
            )
            .unwrap();
            let cvx = solve(&ProgramSpec::new(variant, &inst)).unwrap();
            assert!(
                (pd.objective - cvx.objective).abs() < 1e-4,
                "{policy}: {} vs {}",
                pd.objective,
                cvx.objective
            );
        }
    }

    #[test]
    fn shared_tree_matches_centralized() {
        let inst = tree(false, 8, 1.0);
        for policy in [Policy::Mcdp, Policy::Mcd] {
            let pd = run_primal_dual(
                &inst,
                &PrimalDualOptions {
                    policy,
                    ..Default::default()
                },
                None,
            )
            .unwrap();
            let cent = solve_shared(
                &inst,
                &SharedOptions {
                    policy,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(
                (pd.objective - cent.objective).abs() <= 0.01 * cent.objective.abs(),
                "{policy}: {} vs {}",
                pd.objective,
                cent.objective
            );
            assert!(pd.capacity_slackness < 1e-3 && pd.budget_slackness < 1e-3);
            assert!(pd.always_in_region);
        }
    }

    #[test]
    fn dual_gradient_matches_finite_differences() {
        let inst = tree(false, 5, 1.0);
        for policy in [Policy::Mcdp, Policy::Mcd] {
            let dual = DualState {
                nu: vec![0.4, 0.6, 0.8],
                mu: (0..inst.num_classes())
                    .map(|c| 0.2 + 0.05 * c as f64)
                    .collect(),
            };
            let inner = InnerOptions {
                tol: 1e-15,
                ..Default::default()
            };
            let value = |d: &DualState| {
                let mut h = vec![0.05; inst.num_vars()];
                inner_maximize(&inst, policy, d, &mut h, &inner).unwrap();
                lagrangian(&inst, policy, &h, d)
            };
            let mut h = vec![0.05; inst.num_vars()];
            inner_maximize(&inst, policy, &dual, &mut h, &inner).unwrap();
            let (g_nu, g_mu) = dual_gradients(&inst, policy, &h);
            let eps = 1e-6;
            let fd = |bump: &dyn Fn(&mut DualState, f64)| {
                let (mut up, mut down) = (dual.clone(), dual.clone());
                bump(&mut up, eps);
                bump(&mut down, -eps);
                (value(&up) - value(&down)) / (2.0 * eps)
            };
            for v in 0..3 {
                let num = fd(&|d, e| d.nu[v] += e);
                assert!(
                    (num - g_nu[v]).abs() <= 1e-6 * g_nu[v].abs().max(1.0),
                    "{policy} nu {v}: {num} vs {}",
                    g_nu[v]
                );
            }
            for c in 0..inst.num_classes() {
                let num = fd(&|d, e| d.mu[c] += e);
                assert!(
                    (num - g_mu[c]).abs() <= 1e-6 * g_mu[c].abs().max(1.0),
                    "{policy} mu {c}: {num} vs {}",
                    g_mu[c]
                );
            }
        }
    }

    #[test]
    fn dual_csv_has_one_row_per_price() {
        let inst = tree(false, 3, 1.0);
        let r = run_primal_dual(
            &inst,
            &PrimalDualOptions {
                record_every: 5,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dual_csv(&inst, &r.trajectory, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "iteration,node,nu,content,path,mu,objective,capacity_residual,budget_residual"
        );
        assert_eq!(
            lines.len(),
            1 + r.trajectory.len() * (3 + inst.num_classes())
        );
        assert_eq!(r.trajectory.last().unwrap().iteration, r.iterations);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn inner_solution_is_block_optimal(
            nu in proptest::collection::vec(0.05f64..2.0, 3),
            mu in proptest::collection::vec(0.05f64..2.0, 6),
            mcd in any::<bool>(),
            class in 0usize..6,
            shift in proptest::collection::vec(-0.02f64..0.02, 2),
        ) {
            let inst = tree(false, 3, 1.0);
            let policy = if mcd { Policy::Mcd } else { Policy::Mcdp };
            let dual = DualState { nu, mu };
            let mut h = vec![0.1; inst.num_vars()];
            inner_maximize(&inst, policy, &dual, &mut h, &InnerOptions::default()).unwrap();
            let best = lagrangian(&inst, policy, &h, &dual);
            let off = inst.offset(class);
            let mut g = h.clone();
            for p in 0..2 {
                g[off + p] = (g[off + p] + shift[p]).clamp(1e-6, 1.0 - 1e-6);
            }
            prop_assert!(lagrangian(&inst, policy, &g, &dual) <= best + 1e-12);
            prop_assert!(inner_residual(&inst, policy, &dual, &h, FEASIBILITY_SLACK) < 1e-9);
        }
    }
}
