use std::time::Instant;

use log::info;

use super::config::ExperimentConfig;
use super::output::{Bundle, Cell, Table};
use crate::analysis::{check_feasible, hits_from_timers, timers_from_hits, Policy};
use crate::cost::{total_cost, CostBreakdown};
use crate::error::{Error, Result};
use crate::model::Instance;
use crate::online::run_online;
use crate::primal_dual::{run_primal_dual, PrimalDualResult};
use crate::sim::{
    simulate_baseline, simulate_shared, simulate_ttl, Eviction, SimReport, TimerField,
};
use crate::solver::{solve, solve_shared, ProgramSpec, SharedOptions, Variant};

/// Centralized optimum of an experiment.
#[derive(Debug, Clone)]
pub struct Optimum {
    pub label: String,
    pub hits: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
    pub secs: f64,
}

/// Solves the program selected by the config: the shared-copy program when
/// paths share contents, otherwise the line or general-network program.
pub fn optimum(cfg: &ExperimentConfig, inst: &Instance) -> Result<Optimum> {
    let t0 = Instant::now();
    if cfg.solver.variant.is_none() && cfg.is_shared(inst) {
        let opts = SharedOptions {
            policy: cfg.policy,
            slack: cfg.solver.slack,
            ..SharedOptions::default()
        };
        let s = solve_shared(inst, &opts)?;
        return Ok(Optimum {
            label: format!("shared-{}", cfg.policy),
            hits: s.hits,
            objective: s.objective,
            iterations: s.outer_iterations,
            secs: t0.elapsed().as_secs_f64(),
        });
    }
    let variant = cfg
        .solver
        .variant
        .unwrap_or_else(|| Variant::utility(cfg.policy, inst.network.paths.len() == 1));
    let mut prog = ProgramSpec::new(variant, inst).with_cost(cfg.cost);
    prog.slack = cfg.solver.slack;
    prog.options = cfg.solver.spg();
    let r = solve(&prog)?;
    Ok(Optimum {
        label: serde_json::to_value(variant)?
            .as_str()
            .unwrap_or_default()
            .to_string(),
        hits: r.hits,
        objective: r.objective,
        iterations: r.iterations,
        secs: t0.elapsed().as_secs_f64(),
    })
}

/// Timers realizing a hit field, class by class.
pub fn timers_for(inst: &Instance, policy: Policy, hits: &[Vec<f64>]) -> Result<TimerField> {
    inst.classes
        .iter()
        .zip(hits)
        .map(|(c, h)| timers_from_hits(policy, c.rate, h))
        .collect()
}

/// Simulates TTL caching with the given timers, sharing copies when the
/// config asks for it.
pub fn simulate_timers(
    cfg: &ExperimentConfig,
    inst: &Instance,
    policy: Policy,
    timers: &TimerField,
) -> Result<SimReport> {
    if cfg.is_shared(inst) {
        simulate_shared(inst, policy, timers, &cfg.simulation)
    } else {
        simulate_ttl(inst, policy, timers, &cfg.simulation)
    }
}

/// Long-format per-(class, position) table with one column per field.
pub fn field_table(name: &str, inst: &Instance, fields: &[(&str, &[Vec<f64>])]) -> Table {
    let mut columns = vec!["content", "path", "position", "node"];
    columns.extend(fields.iter().map(|(n, _)| *n));
    let mut t = Table::new(name, &columns);
    for (c, class) in inst.classes.iter().enumerate() {
        for (p, &v) in inst.path(c).nodes.iter().enumerate() {
            let mut row: Vec<Cell> =
                vec![class.content.into(), class.path.into(), p.into(), v.into()];
            row.extend(fields.iter().map(|(_, f)| Cell::from(f[c][p])));
            t.push(row);
        }
    }
    t
}

/// Largest absolute entry-wise difference of two fields.
pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn occupancy(inst: &Instance, hits: &[Vec<f64>]) -> Vec<f64> {
    crate::solver::shared_occupancy(inst, &inst.flatten(hits))
}

fn rates(inst: &Instance) -> Vec<f64> {
    inst.classes.iter().map(|c| c.rate).collect()
}

/// Forward or inverse stationary map of the configured field.
pub fn analyze(cfg: &ExperimentConfig) -> Result<Bundle> {
    let inst = cfg.instance()?;
    let a = &cfg.analyze;
    let (timers, hits) = match (&a.timers, &a.hits) {
        (Some(t), None) => {
            let timers = t.expand(&inst)?;
            let hits = inst
                .classes
                .iter()
                .zip(&timers)
                .map(|(c, t)| hits_from_timers(cfg.policy, c.rate, t))
                .collect::<Result<Vec<_>>>()?;
            (timers, hits)
        }
        (None, Some(h)) => {
            let hits = h.expand(&inst)?;
            for (c, row) in hits.iter().enumerate() {
                check_feasible(cfg.policy, row, 0.0)
                    .map_err(|e| Error::InfeasibleHits(format!("class {c}: {e}")))?;
            }
            (timers_for(&inst, cfg.policy, &hits)?, hits)
        }
        _ => {
            return Err(Error::Config(
                "analyze needs exactly one of `timers` and `hits`".into(),
            ))
        }
    };
    let mut b = Bundle::default();
    b.tables.push(field_table(
        "analysis",
        &inst,
        &[("timer", &timers), ("hit", &hits)],
    ));
    b.set("policy", cfg.policy);
    if a.roundtrip {
        let error = if a.timers.is_some() {
            max_abs_diff(&timers_for(&inst, cfg.policy, &hits)?, &timers)
        } else {
            let back = inst
                .classes
                .iter()
                .zip(&timers)
                .map(|(c, t)| hits_from_timers(cfg.policy, c.rate, t))
                .collect::<Result<Vec<_>>>()?;
            max_abs_diff(&back, &hits)
        };
        b.set("roundtrip_error", error);
    }
    Ok(b)
}

/// Centralized optimum with the realizing timers.
pub fn solve_cmd(cfg: &ExperimentConfig) -> Result<Bundle> {
    let inst = cfg.instance()?;
    let opt = optimum(cfg, &inst)?;
    let policy = match cfg.solver.variant {
        Some(v) => v.policy(),
        None => cfg.policy,
    };
    let timers = timers_for(&inst, policy, &opt.hits)?;
    let mut b = Bundle::default();
    b.tables.push(field_table(
        "solution",
        &inst,
        &[("h", &opt.hits), ("timer", &timers)],
    ));
    b.set("program", &opt.label);
    b.set("objective", opt.objective);
    b.set("iterations", opt.iterations);
    b.set("occupancy", occupancy(&inst, &opt.hits));
    b.set("seconds", opt.secs);
    if !cfg.is_shared(&inst) {
        b.set(
            "cost",
            total_cost(policy, &rates(&inst), &timers, &cfg.cost)?,
        );
    }
    Ok(b)
}

/// Online primal controller driven by simulated requests.
pub fn online(cfg: &ExperimentConfig) -> Result<Bundle> {
    let inst = cfg.instance()?;
    let t0 = Instant::now();
    let run = run_online(&inst, &cfg.online, None)?;
    let secs = t0.elapsed().as_secs_f64();
    let hits = run.state.hit_field(&inst);
    let z_star = inst.unflatten(&run.z_star_hits);
    let mut b = Bundle::default();
    let mut fields: Vec<(&str, &[Vec<f64>])> = vec![
        ("h", &hits),
        ("z_maximizer", &z_star),
        ("timer", &run.state.timers),
    ];
    let opt = if cfg.is_shared(&inst) {
        None
    } else {
        Some(optimum(cfg, &inst)?)
    };
    if let Some(o) = &opt {
        fields.push(("optimum", &o.hits));
    }
    b.tables.push(field_table("online", &inst, &fields));
    let mut traj = Table::new("trajectory", &["k", "time", "Z", "Y", "step"]);
    for p in &run.trajectory {
        traj.push(vec![
            p.k.into(),
            p.time.into(),
            p.z.into(),
            p.y.into(),
            p.step.into(),
        ]);
    }
    b.tables.push(traj);
    if !run.trace.is_empty() {
        let mut t = Table::new("trace", &["k", "content", "cache", "h", "T", "Z", "Y"]);
        for r in &run.trace {
            t.push(vec![
                r.k.into(),
                r.content.into(),
                r.cache.into(),
                r.h.into(),
                r.timer.into(),
                r.z.into(),
                r.y.into(),
            ]);
        }
        b.tables.push(t);
    }
    b.set("requests", cfg.online.requests);
    b.set("final_Y", run.final_y());
    b.set("Z_max", run.z_star);
    b.set("halvings", run.halvings);
    b.set("occupancy", &run.state.occupancy);
    b.set(
        "utility",
        crate::solver::aggregate_utility(&inst, &run.state.hits),
    );
    b.set("seconds", secs);
    if let Some(o) = &opt {
        b.set("optimum_objective", o.objective);
        b.set("max_gap_to_optimum", max_abs_diff(&hits, &o.hits));
    }
    Ok(b)
}

/// Prices as a long table: one row per node price and per class price.
pub fn dual_table(inst: &Instance, r: &PrimalDualResult) -> Table {
    let cols = [
        "iteration",
        "node",
        "nu",
        "content",
        "path",
        "mu",
        "objective",
        "capacity_residual",
        "budget_residual",
    ];
    let mut t = Table::new("dual", &cols);
    for p in &r.trajectory {
        let tail = |t: &mut Table, lead: Vec<Cell>| {
            let mut row = lead;
            row.extend([
                p.objective.into(),
                p.capacity_residual.into(),
                p.budget_residual.into(),
            ]);
            t.push(row);
        };
        for (v, &nu) in p.nu.iter().enumerate() {
            tail(
                &mut t,
                vec![
                    p.iteration.into(),
                    v.into(),
                    nu.into(),
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                ],
            );
        }
        for (c, &mu) in p.mu.iter().enumerate() {
            let class = &inst.classes[c];
            tail(
                &mut t,
                vec![
                    p.iteration.into(),
                    Cell::Empty,
                    Cell::Empty,
                    class.content.into(),
                    class.path.into(),
                    mu.into(),
                ],
            );
        }
    }
    t
}

fn primal_dual_summary(b: &mut Bundle, r: &PrimalDualResult, secs: f64) {
    b.set("objective", r.objective);
    b.set("iterations", r.iterations);
    b.set("converged", r.converged);
    b.set("capacity_violation", r.capacity_violation);
    b.set("budget_violation", r.budget_violation);
    b.set("capacity_slackness", r.capacity_slackness);
    b.set("budget_slackness", r.budget_slackness);
    b.set("always_in_region", r.always_in_region);
    b.set("repairs", r.repairs);
    b.set("occupancy", &r.occupancy);
    b.set("seconds", secs);
}

/// Distributed primal-dual run.
pub fn primal_dual(cfg: &ExperimentConfig) -> Result<Bundle> {
    let inst = cfg.instance()?;
    let mut opts = cfg.primal_dual.clone();
    opts.policy = cfg.policy;
    let t0 = Instant::now();
    let r = run_primal_dual(&inst, &opts, None)?;
    let secs = t0.elapsed().as_secs_f64();
    let mut b = Bundle::default();
    b.tables
        .push(field_table("primal_dual", &inst, &[("h", &r.hits)]));
    b.tables.push(dual_table(&inst, &r));
    primal_dual_summary(&mut b, &r, secs);
    Ok(b)
}

fn histogram_table(report: &SimReport) -> Table {
    let mut t = Table::new("occupancy", &["node", "level", "mass"]);
    for n in &report.nodes {
        for (level, mass) in n.histogram().into_iter().enumerate() {
            t.push(vec![n.node.into(), level.into(), mass.into()]);
        }
    }
    t
}

fn report_summary(b: &mut Bundle, inst: &Instance, report: &SimReport) {
    b.set("policy", &report.policy);
    b.set("shared", report.shared);
    b.set("replications", report.replications);
    b.set("requests_per_run", report.requests_per_run);
    b.set("utility", report.utility(inst));
    b.set("mean_occupancy", report.mean_occupancy());
    b.set(
        "occupancy_std",
        report.nodes.iter().map(|n| n.std()).collect::<Vec<_>>(),
    );
    b.set("events", report.events);
    b.set("seconds", report.wall_clock_secs);
}

/// Simulation of the optimized TTL configuration, the configured timers or
/// an eviction baseline.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Bundle> {
    let inst = cfg.instance()?;
    let mut b = Bundle::default();
    if let Some(ev) = cfg.eviction {
        let report = simulate_baseline(&inst, ev, &cfg.simulation)?;
        b.tables.push(field_table(
            "simulation",
            &inst,
            &[("hit_prob", &report.hit_probs())],
        ));
        b.tables.push(histogram_table(&report));
        report_summary(&mut b, &inst, &report);
        b.set("cost", report.costs(&cfg.cost));
        return Ok(b);
    }
    let (timers, analytic) = match &cfg.analyze.timers {
        Some(t) => {
            let timers = t.expand(&inst)?;
            let hits = inst
                .classes
                .iter()
                .zip(&timers)
                .map(|(c, t)| hits_from_timers(cfg.policy, c.rate, t))
                .collect::<Result<Vec<_>>>()?;
            (timers, hits)
        }
        None => {
            let opt = optimum(cfg, &inst)?;
            info!(
                "{} optimum {:.6} in {:.2}s",
                opt.label, opt.objective, opt.secs
            );
            (timers_for(&inst, cfg.policy, &opt.hits)?, opt.hits)
        }
    };
    let report = simulate_timers(cfg, &inst, cfg.policy, &timers)?;
    let empirical = report.hit_probs();
    let residence = report.residence();
    b.tables.push(field_table(
        "simulation",
        &inst,
        &[
            ("analytic", &analytic),
            ("hit_prob", &empirical),
            ("residence", &residence),
        ],
    ));
    b.tables.push(histogram_table(&report));
    report_summary(&mut b, &inst, &report);
    b.set("max_abs_error", max_abs_diff(&empirical, &analytic));
    b.set(
        "max_abs_error_residence",
        max_abs_diff(&residence, &analytic),
    );
    b.set("analytic_occupancy", occupancy(&inst, &analytic));
    b.set(
        "analytic_utility",
        crate::solver::aggregate_utility(&inst, &inst.flatten(&analytic)),
    );
    b.set("cost", report.costs(&cfg.cost));
    if !cfg.is_shared(&inst) {
        b.set(
            "analytic_cost",
            total_cost(cfg.policy, &rates(&inst), &timers, &cfg.cost)?,
        );
    }
    Ok(b)
}

/// One row of a baseline comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub eviction: Eviction,
    pub utility: f64,
    /// `baseline / mcdp`; above 1 means worse for negative utilities.
    pub ratio: f64,
    /// `1 + (baseline - mcdp) / |mcdp|`; at most 1 when MCDP is no worse.
    pub normalized: f64,
    pub cost: CostBreakdown,
}

/// Simulated utility of optimized MCDP against each configured baseline on
/// the same request streams.
pub fn compare_runs(
    cfg: &ExperimentConfig,
    inst: &Instance,
) -> Result<(f64, f64, Vec<Comparison>)> {
    let mut mcdp = cfg.clone();
    mcdp.policy = Policy::Mcdp;
    let opt = optimum(&mcdp, inst)?;
    let timers = timers_for(inst, Policy::Mcdp, &opt.hits)?;
    let reference = simulate_timers(&mcdp, inst, Policy::Mcdp, &timers)?.utility(inst);
    let rows = cfg
        .baselines
        .iter()
        .map(|&ev| {
            let r = simulate_baseline(inst, ev, &cfg.simulation)?;
            let u = r.utility(inst);
            Ok(Comparison {
                eviction: ev,
                utility: u,
                ratio: u / reference,
                normalized: 1.0 + (u - reference) / reference.abs(),
                cost: r.costs(&cfg.cost),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((opt.objective, reference, rows))
}

pub fn comparison_table(name: &str, rows: &[Comparison]) -> Table {
    let mut t = Table::new(
        name,
        &[
            "policy",
            "utility",
            "ratio",
            "normalized",
            "search",
            "fetch",
            "transfer",
        ],
    );
    for r in rows {
        t.push(vec![
            format!("{}+lcd", r.eviction).into(),
            r.utility.into(),
            r.ratio.into(),
            r.normalized.into(),
            r.cost.search.into(),
            r.cost.fetch.into(),
            r.cost.transfer.into(),
        ]);
    }
    t
}

/// Normalized utility of each baseline relative to optimized MCDP.
pub fn compare(cfg: &ExperimentConfig) -> Result<Bundle> {
    let inst = cfg.instance()?;
    let (optimum, reference, rows) = compare_runs(cfg, &inst)?;
    let mut b = Bundle::default();
    b.tables.push(comparison_table("compare", &rows));
    b.set("mcdp_optimum", optimum);
    b.set("mcdp_utility", reference);
    b.set("mcdp_dominates", rows.iter().all(|r| r.normalized <= 1.0));
    Ok(b)
}
