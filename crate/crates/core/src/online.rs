//! Online primal algorithm: per-request gradient steps on the penalized
//! utility `Z(h)`, with timers refreshed from the updated hit probabilities.

use std::io::Write;

use log::{debug, warn};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::analysis::{mcdp_timers_from_hits, FEASIBILITY_SLACK};
use crate::error::{Error, Result};
use crate::model::Instance;
use crate::solver::{maximize, project_capped_sum, Objective, Polytope, SpgOptions};

/// Convex non-decreasing penalty on a constraint excess `x = load - b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PenaltyFn {
    /// `max{0, x - b log(b + x)}` of the excess itself.
    Verbatim,
    /// `strength (x - b log(1 + x / b))` for `x > 0`, zero otherwise.
    ScaledLog { strength: f64 },
    /// `strength x^2 / 2` for `x > 0`, zero otherwise.
    Quadratic { strength: f64 },
}

impl PenaltyFn {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PenaltyFn::Verbatim => Ok(()),
            PenaltyFn::ScaledLog { strength } | PenaltyFn::Quadratic { strength } => {
                if strength > 0.0 && strength.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!(
                        "penalty strength must be positive, got {strength}"
                    )))
                }
            }
        }
    }

    pub fn value(&self, x: f64, b: f64) -> f64 {
        match *self {
            PenaltyFn::Verbatim => (x - b * (b + x).max(f64::MIN_POSITIVE).ln()).max(0.0),
            PenaltyFn::ScaledLog { strength } if x > 0.0 => strength * (x - b * (x / b).ln_1p()),
            PenaltyFn::Quadratic { strength } if x > 0.0 => 0.5 * strength * x * x,
            _ => 0.0,
        }
    }

    pub fn derivative(&self, x: f64, b: f64) -> f64 {
        match *self {
            PenaltyFn::Verbatim => {
                if self.value(x, b) > 0.0 {
                    1.0 - b / (b + x)
                } else {
                    0.0
                }
            }
            PenaltyFn::ScaledLog { strength } if x > 0.0 => strength * x / (b + x),
            PenaltyFn::Quadratic { strength } if x > 0.0 => strength * x,
            _ => 0.0,
        }
    }
}

/// Penalties on node capacity (`C_l`) and per-path budget (`C~_i`) excess.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySpec {
    #[serde(default = "default_capacity_penalty")]
    pub capacity: PenaltyFn,
    #[serde(default = "default_content_penalty")]
    pub content: PenaltyFn,
    /// Multiply each class's budget penalty by its utility weight.
    #[serde(default = "default_true")]
    pub content_by_weight: bool,
}

fn default_capacity_penalty() -> PenaltyFn {
    PenaltyFn::Quadratic { strength: 1.0 }
}
fn default_content_penalty() -> PenaltyFn {
    PenaltyFn::Quadratic { strength: 200.0 }
}
fn default_true() -> bool {
    true
}

impl Default for PenaltySpec {
    fn default() -> Self {
        Self {
            capacity: default_capacity_penalty(),
            content: default_content_penalty(),
            content_by_weight: true,
        }
    }
}

impl PenaltySpec {
    /// Both penalties in the unscaled `Verbatim` form.
    pub fn verbatim() -> Self {
        Self {
            capacity: PenaltyFn::Verbatim,
            content: PenaltyFn::Verbatim,
            content_by_weight: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.capacity.validate()?;
        self.content.validate()
    }

    fn content_scale(&self, weight: f64) -> f64 {
        if self.content_by_weight {
            weight
        } else {
            1.0
        }
    }
}

fn class_sums(inst: &Instance, flat: &[f64]) -> Vec<f64> {
    (0..inst.num_classes())
        .map(|c| {
            flat[inst.offset(c)..inst.offset(c) + inst.path_len(c)]
                .iter()
                .sum()
        })
        .collect()
}

fn node_loads(inst: &Instance, flat: &[f64]) -> Vec<f64> {
    (0..inst.num_nodes())
        .map(|v| {
            inst.slots(v)
                .iter()
                .map(|&(c, p)| flat[inst.offset(c) + p])
                .sum()
        })
        .collect()
}

fn class_utility(inst: &Instance, c: usize, h: &[f64]) -> f64 {
    let w = inst.classes[c].weight;
    h.iter()
        .enumerate()
        .map(|(p, &x)| inst.discount(c, p) * inst.utility.value_clamped(w, x))
        .sum()
}

fn content_penalty(inst: &Instance, pen: &PenaltySpec, c: usize, sum: f64) -> f64 {
    pen.content_scale(inst.classes[c].weight) * pen.content.value(sum - 1.0, 1.0)
}

fn capacity_penalty(inst: &Instance, pen: &PenaltySpec, loads: &[f64]) -> f64 {
    loads
        .iter()
        .enumerate()
        .map(|(v, &o)| pen.capacity.value(o - inst.capacity(v), inst.capacity(v)))
        .sum()
}

/// Penalized utility `Z(h)` of a flat hit vector.
pub fn z_value(inst: &Instance, pen: &PenaltySpec, flat: &[f64]) -> f64 {
    let util: f64 = (0..inst.num_classes())
        .map(|c| {
            class_utility(
                inst,
                c,
                &flat[inst.offset(c)..inst.offset(c) + inst.path_len(c)],
            )
        })
        .sum();
    let content: f64 = class_sums(inst, flat)
        .iter()
        .enumerate()
        .map(|(c, &s)| content_penalty(inst, pen, c, s))
        .sum();
    util - capacity_penalty(inst, pen, &node_loads(inst, flat)) - content
}

/// `dZ/dh` of a flat hit vector.
pub fn z_gradient(inst: &Instance, pen: &PenaltySpec, flat: &[f64], g: &mut [f64]) {
    let loads = node_loads(inst, flat);
    let sums = class_sums(inst, flat);
    for c in 0..inst.num_classes() {
        class_gradient(
            inst,
            pen,
            flat,
            &loads,
            sums[c],
            c,
            &mut g[inst.offset(c)..inst.offset(c) + inst.path_len(c)],
        );
    }
}

fn class_gradient(
    inst: &Instance,
    pen: &PenaltySpec,
    flat: &[f64],
    loads: &[f64],
    sum: f64,
    c: usize,
    out: &mut [f64],
) {
    let class = inst.classes[c];
    let off = inst.offset(c);
    let budget = pen.content_scale(class.weight) * pen.content.derivative(sum - 1.0, 1.0);
    for (p, &v) in inst.path(c).nodes.iter().enumerate() {
        let b = inst.capacity(v);
        out[p] = inst.discount(c, p) * inst.utility.derivative_clamped(class.weight, flat[off + p])
            - pen.capacity.derivative(loads[v] - b, b)
            - budget;
    }
}

struct ZObjective<'a> {
    inst: &'a Instance,
    pen: &'a PenaltySpec,
}

impl Objective for ZObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        z_value(self.inst, self.pen, x)
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        z_gradient(self.inst, self.pen, x, g)
    }
}

fn lower_bound(inst: &Instance) -> f64 {
    if inst.utility.diverges_at_zero() {
        inst.utility.h_min
    } else {
        0.0
    }
}

/// Feasible region of the online iterates: the box and per-class sums at most `1 - slack`.
fn online_region(inst: &Instance, slack: f64) -> Polytope {
    let mut set = Polytope::boxed(inst.num_vars(), lower_bound(inst), 1.0);
    for c in 0..inst.num_classes() {
        set.add_budget(inst.offset(c), inst.path_len(c), 1.0 - slack);
    }
    set
}

/// Maximizer of `Z` over the online region, and its value. `Z` is concave
/// only for convex penalties; the verbatim pair is not convex for `x < 0`.
pub fn maximize_z(inst: &Instance, pen: &PenaltySpec, slack: f64) -> Result<(Vec<f64>, f64)> {
    let set = online_region(inst, slack);
    let x0 = uniform_start(inst, slack);
    let out = maximize(&ZObjective { inst, pen }, &set, &x0, &SpgOptions::default())?;
    if !out.converged && !(out.stalled && out.pg_norm <= 1e-6) {
        return Err(Error::NonConvergence {
            algorithm: "penalized utility maximization",
            iterations: out.iterations,
            detail: format!("projected gradient {:.3e}", out.pg_norm),
        });
    }
    Ok((out.x, out.value))
}

/// `h_il = min(B_l / slots_l, (1 - slack) / |p|)`.
pub fn uniform_start(inst: &Instance, slack: f64) -> Vec<f64> {
    let lo = lower_bound(inst);
    let mut x = vec![0.0; inst.num_vars()];
    for c in 0..inst.num_classes() {
        let len = inst.path_len(c);
        for (p, &v) in inst.path(c).nodes.iter().enumerate() {
            let share = inst.capacity(v) / inst.slots(v).len() as f64;
            x[inst.offset(c) + p] = share.min((1.0 - slack) / len as f64).max(lo);
        }
    }
    x
}

/// Live state of an online run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalState {
    /// Flat hit probabilities.
    pub hits: Vec<f64>,
    /// Per class MCDP timers.
    pub timers: Vec<Vec<f64>>,
    /// Step scale `c`; class `i` moves by `c / lambda_i` times its gradient.
    pub step: f64,
    pub k: usize,
    /// `B_curr` per node.
    pub occupancy: Vec<f64>,
    pub saturations: usize,
    class_sums: Vec<f64>,
}

impl PrimalState {
    pub fn new(inst: &Instance, hits: Vec<f64>, step: f64) -> Result<Self> {
        if hits.len() != inst.num_vars() {
            return Err(Error::Parameter(format!(
                "expected {} hit values, got {}",
                inst.num_vars(),
                hits.len()
            )));
        }
        let timers = (0..inst.num_classes())
            .map(|c| {
                let off = inst.offset(c);
                mcdp_timers_from_hits(inst.classes[c].rate, &hits[off..off + inst.path_len(c)])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            occupancy: node_loads(inst, &hits),
            class_sums: class_sums(inst, &hits),
            hits,
            timers,
            step,
            k: 0,
            saturations: 0,
        })
    }

    pub fn hit_field(&self, inst: &Instance) -> Vec<Vec<f64>> {
        inst.unflatten(&self.hits)
    }
}

/// One online update for a request of class `c`: moves all of the class's
/// hit probabilities along `dZ/dh`, clips to the feasible region and
/// refreshes the class's timers.
pub fn primal_step(
    inst: &Instance,
    pen: &PenaltySpec,
    state: &mut PrimalState,
    c: usize,
    slack: f64,
) -> Result<()> {
    if c >= inst.num_classes() {
        return Err(Error::Parameter(format!("class {c} is out of range")));
    }
    let class = inst.classes[c];
    if !(class.rate > 0.0) {
        return Err(Error::Parameter(format!("class {c} has zero request rate")));
    }
    let off = inst.offset(c);
    let len = inst.path_len(c);
    let zeta = state.step / class.rate;
    let mut g = vec![0.0; len];
    class_gradient(
        inst,
        pen,
        &state.hits,
        &state.occupancy,
        state.class_sums[c],
        c,
        &mut g,
    );
    let lo = lower_bound(inst);
    let mut next: Vec<f64> = (0..len)
        .map(|p| (state.hits[off + p] + zeta * g[p]).clamp(lo, 1.0))
        .collect();
    let budget = 1.0 - slack;
    if next.iter().sum::<f64>() > budget {
        project_capped_sum(&mut next, lo, 1.0, budget)?;
        state.saturations += 1;
        debug!("class {c} saturated its budget at step {}", state.k);
    }
    for (p, &v) in inst.path(c).nodes.iter().enumerate() {
        state.occupancy[v] += next[p] - state.hits[off + p];
    }
    state.hits[off..off + len].copy_from_slice(&next);
    state.class_sums[c] = next.iter().sum();
    state.timers[c] = mcdp_timers_from_hits(class.rate, &next)?;
    state.k += 1;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineOptions {
    /// Initial step scale `c` in `zeta_i = c / lambda_i`.
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub penalty: PenaltySpec,
    /// Number of requests to process.
    #[serde(default = "default_requests")]
    pub requests: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Steps between Lyapunov checkpoints.
    #[serde(default = "default_checkpoint")]
    pub checkpoint: usize,
    /// Halve the step when `Z` drops between checkpoints.
    #[serde(default = "default_true")]
    pub halve_on_oscillation: bool,
    /// Record per-step trace rows every this many steps (0 disables).
    #[serde(default)]
    pub trace_every: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn default_step() -> f64 {
    0.002
}
fn default_requests() -> usize {
    2_000_000
}
fn default_seed() -> u64 {
    1
}
fn default_checkpoint() -> usize {
    10_000
}
fn default_slack() -> f64 {
    FEASIBILITY_SLACK
}

impl Default for OnlineOptions {
    fn default() -> Self {
        Self {
            step: default_step(),
            penalty: PenaltySpec::default(),
            requests: default_requests(),
            seed: default_seed(),
            checkpoint: default_checkpoint(),
            halve_on_oscillation: true,
            trace_every: 0,
            slack: default_slack(),
        }
    }
}

/// Lyapunov checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub k: usize,
    pub time: f64,
    pub z: f64,
    /// `Z(h*) - Z(h)` with `h*` the maximizer of `Z`.
    pub y: f64,
    pub step: f64,
}

/// Per-step record of an updated `(content, cache)` coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub content: usize,
    pub cache: usize,
    pub h: f64,
    #[serde(rename = "T")]
    pub timer: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    #[serde(rename = "Y")]
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRun {
    pub state: PrimalState,
    pub trajectory: Vec<TrajectoryPoint>,
    pub trace: Vec<TraceRow>,
    /// Maximizer of `Z` and its value.
    pub z_star_hits: Vec<f64>,
    pub z_star: f64,
    pub halvings: usize,
}

impl OnlineRun {
    pub fn final_y(&self) -> f64 {
        self.trajectory.last().map_or(f64::NAN, |p| p.y)
    }
}

/// Streams `(k, content, cache, h, T, Z, Y)` rows as CSV.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

const DIVERGENCE_RUN: usize = 1000;

/// Runs the online primal algorithm on Poisson requests drawn from the
/// instance's class rates, starting from `h0` (uniform by default).
pub fn run_online(
    inst: &Instance,
    opts: &OnlineOptions,
    h0: Option<Vec<f64>>,
) -> Result<OnlineRun> {
    opts.penalty.validate()?;
    inst.utility.validate()?;
    if !(opts.step >= 0.0) {
        return Err(Error::Parameter(format!(
            "step must be non-negative, got {}",
            opts.step
        )));
    }
    let (z_star_hits, z_star) = maximize_z(inst, &opts.penalty, opts.slack)?;
    let h0 = h0.unwrap_or_else(|| uniform_start(inst, opts.slack));
    let mut state = PrimalState::new(inst, h0, opts.step)?;
    let rates: Vec<f64> = inst.classes.iter().map(|c| c.rate).collect();
    let total: f64 = rates.iter().sum();
    let mut trajectory = Vec::new();
    let mut trace = Vec::new();
    let mut z = z_value(inst, &opts.penalty, &state.hits);
    trajectory.push(TrajectoryPoint {
        k: 0,
        time: 0.0,
        z,
        y: z_star - z,
        step: state.step,
    });
    if !(total > 0.0) || opts.requests == 0 {
        return Ok(OnlineRun {
            state,
            trajectory,
            trace,
            z_star_hits,
            z_star,
            halvings: 0,
        });
    }
    let picker =
        WeightedIndex::new(&rates).map_err(|e| Error::Model(format!("request rates: {e}")))?;
    let gaps = Exp::new(total).map_err(|e| Error::Model(format!("request rate: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut time = 0.0;
    let mut falling = 0usize;
    let mut last_checkpoint = z;
    let mut halvings = 0;
    let checkpoint = opts.checkpoint.max(1);
    for k in 1..=opts.requests {
        time += gaps.sample(&mut rng);
        let c = picker.sample(&mut rng);
        let off = inst.offset(c);
        let len = inst.path_len(c);
        let before = class_utility(inst, c, &state.hits[off..off + len])
            - content_penalty(inst, &opts.penalty, c, state.class_sums[c]);
        let cap_before = capacity_penalty(inst, &opts.penalty, &state.occupancy);
        primal_step(inst, &opts.penalty, &mut state, c, opts.slack)?;
        let after = class_utility(inst, c, &state.hits[off..off + len])
            - content_penalty(inst, &opts.penalty, c, state.class_sums[c]);
        let cap_after = capacity_penalty(inst, &opts.penalty, &state.occupancy);
        let dz = (after - before) - (cap_after - cap_before);
        z += dz;
        if dz < -1e-15 * z.abs().max(1.0) {
            falling += 1;
            if falling >= DIVERGENCE_RUN {
                return Err(Error::NonConvergence {
                    algorithm: "online primal",
                    iterations: k,
                    detail: format!(
                        "Z decreased for {DIVERGENCE_RUN} consecutive steps; step scale {} is too large",
                        state.step
                    ),
                });
            }
        } else {
            falling = 0;
        }
        if opts.trace_every > 0 && k % opts.trace_every == 0 {
            for p in 0..len {
                trace.push(TraceRow {
                    k,
                    content: inst.classes[c].content,
                    cache: inst.path(c).nodes[p],
                    h: state.hits[off + p],
                    timer: state.timers[c][p],
                    z,
                    y: z_star - z,
                });
            }
        }
        if k % checkpoint == 0 || k == opts.requests {
            z = z_value(inst, &opts.penalty, &state.hits);
            trajectory.push(TrajectoryPoint {
                k,
                time,
                z,
                y: z_star - z,
                step: state.step,
            });
            if opts.halve_on_oscillation && z < last_checkpoint - 1e-12 * z.abs().max(1.0) {
                state.step *= 0.5;
                halvings += 1;
                debug!(
                    "Z fell between checkpoints at step {k}; step scale halved to {}",
                    state.step
                );
            }
            last_checkpoint = z;
        }
    }
    if state.saturations > 0 {
        warn!(
            "{} updates were clipped to the per-path budget",
            state.saturations
        );
    }
    Ok(OnlineRun {
        state,
        trajectory,
        trace,
        z_star_hits,
        z_star,
        halvings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContentCatalog, UtilitySpec};

    fn small() -> Instance {
        let cat = ContentCatalog::zipf(5, 0.8, 1.0).unwrap();
        Instance::line(&cat, vec![1.0, 1.5], UtilitySpec::log(0.6)).unwrap()
    }

    #[test]
    fn penalty_shapes() {
        let q = PenaltyFn::Quadratic { strength: 2.0 };
        assert_eq!(q.value(-1.0, 1.0), 0.0);
        assert_eq!(q.value(0.5, 1.0), 0.25);
        assert_eq!(q.derivative(0.5, 1.0), 1.0);
        let s = PenaltyFn::ScaledLog { strength: 1.0 };
        assert!((s.derivative(1.0, 30.0) - 1.0 / 31.0).abs() < 1e-15);
        // the printed composition vanishes for loads between about 0.37 and 145 when B = 30
        for x in [-29.0, -10.0, 0.0, 5.0, 70.0, 110.0] {
            assert_eq!(PenaltyFn::Verbatim.value(x, 30.0), 0.0);
        }
        assert!(PenaltyFn::Verbatim.value(-29.9, 30.0) > 0.0);
        assert!(PenaltyFn::Verbatim.value(0.5, 1.0) > 0.0);
    }

    #[test]
    fn zero_step_leaves_state_unchanged() {
        let inst = small();
        let pen = PenaltySpec::default();
        let mut s = PrimalState::new(&inst, uniform_start(&inst, 1e-9), 0.0).unwrap();
        let before = s.hits.clone();
        primal_step(&inst, &pen, &mut s, 2, 1e-9).unwrap();
        assert_eq!(s.hits, before);
    }

    #[test]
    fn z_maximizer_is_a_fixed_point() {
        let inst = small();
        let pen = PenaltySpec::default();
        let (h, _) = maximize_z(&inst, &pen, 1e-9).unwrap();
        let mut s = PrimalState::new(&inst, h.clone(), 0.002).unwrap();
        for c in 0..inst.num_classes() {
            primal_step(&inst, &pen, &mut s, c, 1e-9).unwrap();
        }
        let moved = s
            .hits
            .iter()
            .zip(&h)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(moved < 1e-6, "{moved}");
    }

    #[test]
    fn single_content_saturates() {
        let cat = ContentCatalog::zipf(1, 0.8, 1.0).unwrap();
        let inst = Instance::line(&cat, vec![5.0, 5.0], UtilitySpec::log(1.0)).unwrap();
        let run = run_online(
            &inst,
            &OnlineOptions {
                requests: 20_000,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        let sum: f64 = run.state.hits.iter().sum();
        assert!(sum > 1.0 - 1e-2 && sum <= 1.0 - 1e-9 + 1e-15, "{sum}");
        assert!((run.state.hits[0] - run.state.hits[1]).abs() < 1e-2);
    }

    #[test]
    fn runaway_step_is_reported() {
        let inst = small();
        let opts = OnlineOptions {
            step: 50.0,
            halve_on_oscillation: false,
            requests: 200_000,
            ..Default::default()
        };
        match run_online(&inst, &opts, None) {
            Err(Error::NonConvergence { .. }) => {}
            Ok(run) => assert!(
                run.final_y() > 1e-3,
                "large steps should not settle: {}",
                run.final_y()
            ),
            Err(e) => panic!("{e}"),
        }
    }
}
