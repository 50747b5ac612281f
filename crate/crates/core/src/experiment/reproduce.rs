use std::time::Instant;

use super::commands::{
    compare_runs, comparison_table, dual_table, field_table, max_abs_diff, optimum,
    simulate_timers, timers_for,
};
use super::config::{ExperimentConfig, NetworkConfig};
use super::output::{Bundle, Table};
use crate::analysis::Policy;
use crate::error::{Error, Result};
use crate::model::Instance;
use crate::online::run_online;
use crate::primal_dual::run_primal_dual;
use crate::solver::{solve, ProgramSpec, Variant};

pub const FIGURES: [&str; 8] = [
    "fig1", "fig2", "fig3-psi", "fig5", "fig6", "fig9", "fig10", "grid",
];

const LINE: &str = r#"{
    "scenario": "line",
    "network": { "kind": "line", "length": 3, "capacity": 30 },
    "contents": 100,
    "workload": { "popularity": { "model": "zipf", "alpha": 0.8 } },
    "utility": { "psi": 0.6 }
}"#;

const DISJOINT_TREE: &str = r#"{
    "scenario": "disjoint-tree",
    "network": { "kind": "binary-tree", "depth": 3, "capacity": 30, "disjoint_contents": true },
    "contents": 100,
    "workload": { "popularity": { "model": "zipf-per-requester", "alphas": [0.2, 0.4, 0.6, 0.8] } },
    "utility": { "psi": 0.6 }
}"#;

const SHARED_TREE: &str = r#"{
    "scenario": "shared-tree",
    "network": { "kind": "binary-tree", "depth": 3, "capacity": 10 },
    "contents": 100,
    "workload": { "popularity": { "model": "zipf", "alpha": 1.2 } },
    "utility": { "psi": 0.6 }
}"#;

const GRID: &str = r#"{
    "scenario": "grid",
    "network": { "kind": "grid", "side": 4, "capacity": 5, "requesters": 12, "weight_min": 1, "weight_max": 20 },
    "contents": 30,
    "workload": { "popularity": { "model": "zipf", "alpha": 0.8 } },
    "utility": { "psi": 0.6 }
}"#;

/// Number of random grid instances in the grid bundle.
pub const GRID_SEEDS: u64 = 5;

/// Default configuration of a figure bundle.
pub fn preset(id: &str) -> Result<ExperimentConfig> {
    let text = match id {
        "fig1" | "fig2" | "fig3-psi" | "fig9" | "fig10" => LINE,
        "fig5" => DISJOINT_TREE,
        "fig6" => SHARED_TREE,
        "grid" => GRID,
        other => {
            return Err(Error::Config(format!(
                "unknown figure {other:?}; expected one of {}",
                FIGURES.join(", ")
            )))
        }
    };
    let mut cfg = ExperimentConfig::from_json(text)?;
    cfg.scenario = id.into();
    Ok(cfg)
}

/// Builds the bundle of a figure from its configuration.
pub fn reproduce(id: &str, cfg: &ExperimentConfig) -> Result<Bundle> {
    match id {
        "fig1" => fig1(cfg),
        "fig2" => fig2(cfg),
        "fig3-psi" => psi_sweep(cfg, &[0.1, 0.4, 0.6, 1.0], false),
        "fig5" => fig5(cfg),
        "fig6" => fig6(cfg),
        "fig9" => fig9(cfg),
        "fig10" => psi_sweep(cfg, &[0.4, 0.6, 1.0], true),
        "grid" => grid(cfg),
        other => Err(Error::Config(format!(
            "unknown figure {other:?}; expected one of {}",
            FIGURES.join(", ")
        ))),
    }
}

fn fig1(cfg: &ExperimentConfig) -> Result<Bundle> {
    let inst = cfg.instance()?;
    let opt = optimum(cfg, &inst)?;
    let t0 = Instant::now();
    let run = run_online(&inst, &cfg.online, None)?;
    let online_secs = t0.elapsed().as_secs_f64();
    let online = run.state.hit_field(&inst);
    let report = simulate_timers(
        cfg,
        &inst,
        Policy::Mcdp,
        &timers_for(&inst, Policy::Mcdp, &opt.hits)?,
    )?;
    let (empirical, residence) = (report.hit_probs(), report.residence());
    let mut b = Bundle::default();
    b.tables.push(field_table(
        "hits",
        &inst,
        &[
            ("solver", &opt.hits),
            ("online", &online),
            ("simulated", &empirical),
            ("residence", &residence),
        ],
    ));
    b.set("solver_objective", opt.objective);
    b.set("solver_seconds", opt.secs);
    b.set("online_requests", cfg.online.requests);
    b.set("online_max_abs_error", max_abs_diff(&online, &opt.hits));
    b.set("online_final_Y", run.final_y());
    b.set("online_seconds", online_secs);
    b.set(
        "simulated_requests",
        report.requests_per_run * report.replications as u64,
    );
    b.set(
        "simulated_max_abs_error",
        max_abs_diff(&empirical, &opt.hits),
    );
    b.set(
        "residence_max_abs_error",
        max_abs_diff(&residence, &opt.hits),
    );
    b.set("simulation_seconds", report.wall_clock_secs);
    Ok(b)
}

fn fig2(cfg: &ExperimentConfig) -> Result<Bundle> {
    let inst = cfg.instance()?;
    let opt = optimum(cfg, &inst)?;
    let report = simulate_timers(
        cfg,
        &inst,
        Policy::Mcdp,
        &timers_for(&inst, Policy::Mcdp, &opt.hits)?,
    )?;
    let mut hist = Table::new("occupancy", &["node", "level", "mass"]);
    let mut stats = Table::new(
        "occupancy_stats",
        &[
            "node",
            "capacity",
            "mean",
            "std",
            "relative_error",
            "std_over_mean",
        ],
    );
    for n in &report.nodes {
        for (level, mass) in n.histogram().into_iter().enumerate() {
            hist.push(vec![n.node.into(), level.into(), mass.into()]);
        }
        let cap = inst.capacity(n.node);
        stats.push(vec![
            n.node.into(),
            cap.into(),
            n.mean().into(),
            n.std().into(),
            ((n.mean() - cap).abs() / cap).into(),
            (n.std() / n.mean()).into(),
        ]);
    }
    let worst = |col: &str| {
        let k = stats.column(col).expect("column exists");
        stats
            .rows
            .iter()
            .filter_map(|r| r[k].as_f64())
            .fold(0.0, f64::max)
    };
    let mut b = Bundle::default();
    b.set("max_relative_error", worst("relative_error"));
    b.set("max_std_over_mean", worst("std_over_mean"));
    b.tables.push(hist);
    b.tables.push(stats);
    Ok(b)
}

fn with_psi(cfg: &ExperimentConfig, psi: f64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.utility.psi = psi;
    c
}

/// Line optimum for several discount factors. The first and last caches are
/// compared through the most popular content and the largest gap.
fn psi_sweep(cfg: &ExperimentConfig, psis: &[f64], simulate: bool) -> Result<Bundle> {
    let mut t = Table::new(
        "hits",
        &["psi", "content", "position", "solver", "simulated"],
    );
    let mut b = Bundle::default();
    for &psi in psis {
        let c = with_psi(cfg, psi);
        let inst = c.instance()?;
        let r = solve(&ProgramSpec::new(
            Variant::utility(Policy::Mcdp, true),
            &inst,
        ))?;
        let sim = if simulate {
            Some(
                simulate_timers(
                    &c,
                    &inst,
                    Policy::Mcdp,
                    &timers_for(&inst, Policy::Mcdp, &r.hits)?,
                )?
                .hit_probs(),
            )
        } else {
            None
        };
        for (k, class) in inst.classes.iter().enumerate() {
            for (p, &h) in r.hits[k].iter().enumerate() {
                t.push(vec![
                    psi.into(),
                    class.content.into(),
                    p.into(),
                    h.into(),
                    sim.as_ref().map(|s| s[k][p]).into(),
                ]);
            }
        }
        let last = inst.path_len(0) - 1;
        let top = top_content(&inst);
        let spread = r
            .hits
            .iter()
            .map(|h| (h[last] - h[0]).abs())
            .fold(0.0, f64::max);
        b.set(
            &format!("psi_{psi}"),
            serde_json::json!({
                "objective": r.objective,
                "top_content_requester_side": r.hits[top][last],
                "top_content_server_side": r.hits[top][0],
                "max_abs_end_gap": spread,
                "max_simulated_error": sim.as_ref().map(|s| max_abs_diff(s, &r.hits)),
            }),
        );
    }
    b.tables.push(t);
    Ok(b)
}

fn top_content(inst: &Instance) -> usize {
    (0..inst.num_classes())
        .max_by(|&a, &b| inst.classes[a].rate.total_cmp(&inst.classes[b].rate))
        .unwrap_or(0)
}

fn fig5(cfg: &ExperimentConfig) -> Result<Bundle> {
    let inst = cfg.instance()?;
    let opt = optimum(cfg, &inst)?;
    let report = simulate_timers(
        cfg,
        &inst,
        cfg.policy,
        &timers_for(&inst, cfg.policy, &opt.hits)?,
    )?;
    let empirical = report.hit_probs();
    let mut b = Bundle::default();
    b.tables.push(field_table(
        "hits",
        &inst,
        &[("solver", &opt.hits), ("simulated", &empirical)],
    ));
    b.set("program", &opt.label);
    b.set("objective", opt.objective);
    b.set("simulated_utility", report.utility(&inst));
    b.set(
        "simulated_max_abs_error",
        max_abs_diff(&empirical, &opt.hits),
    );
    b.set("mean_occupancy", report.mean_occupancy());
    Ok(b)
}

fn fig6(cfg: &ExperimentConfig) -> Result<Bundle> {
    let inst = cfg.instance()?;
    let mut opts = cfg.primal_dual.clone();
    opts.policy = cfg.policy;
    let t0 = Instant::now();
    let pd = run_primal_dual(&inst, &opts, None)?;
    let pd_secs = t0.elapsed().as_secs_f64();
    let cent = optimum(cfg, &inst)?;
    let mut b = Bundle::default();
    b.tables.push(field_table(
        "hits",
        &inst,
        &[("primal_dual", &pd.hits), ("centralized", &cent.hits)],
    ));
    b.tables.push(dual_table(&inst, &pd));
    b.set("primal_dual_objective", pd.objective);
    b.set("centralized_objective", cent.objective);
    b.set(
        "relative_gap",
        (pd.objective - cent.objective).abs() / cent.objective.abs(),
    );
    b.set("iterations", pd.iterations);
    b.set("converged", pd.converged);
    b.set("capacity_slackness", pd.capacity_slackness);
    b.set("budget_slackness", pd.budget_slackness);
    b.set("capacity_violation", pd.capacity_violation);
    b.set("budget_violation", pd.budget_violation);
    b.set("always_in_region", pd.always_in_region);
    b.set("repairs", pd.repairs);
    b.set("primal_dual_seconds", pd_secs);
    b.set("centralized_seconds", cent.secs);
    Ok(b)
}

fn fig9(cfg: &ExperimentConfig) -> Result<Bundle> {
    let mut b = Bundle::default();
    let tree = {
        let mut t = preset("fig6")?;
        t.simulation = cfg.simulation;
        t.baselines = cfg.baselines.clone();
        t.seed = cfg.seed;
        t
    };
    for (name, c) in [("line", cfg), ("tree", &tree)] {
        let inst = c.instance()?;
        let (optimum, reference, rows) = compare_runs(c, &inst)?;
        b.tables
            .push(comparison_table(&format!("compare_{name}"), &rows));
        b.set(
            name,
            serde_json::json!({
                "mcdp_optimum": optimum,
                "mcdp_utility": reference,
                "mcdp_dominates": rows.iter().all(|r| r.normalized <= 1.0),
            }),
        );
    }
    Ok(b)
}

fn grid(cfg: &ExperimentConfig) -> Result<Bundle> {
    let cols = [
        "seed",
        "primal_dual",
        "centralized",
        "relative_gap",
        "iterations",
        "converged",
        "primal_dual_seconds",
        "centralized_seconds",
    ];
    let mut t = Table::new("grid", &cols);
    let mut worst: f64 = 0.0;
    for seed in 1..=GRID_SEEDS {
        let mut c = cfg.clone();
        if let NetworkConfig::Grid { seed: s, .. } = &mut c.network {
            *s = seed;
        } else {
            return Err(Error::Config("the grid bundle needs a grid network".into()));
        }
        let inst = c.instance()?;
        let mut opts = c.primal_dual.clone();
        opts.policy = c.policy;
        let t0 = Instant::now();
        let pd = run_primal_dual(&inst, &opts, None)?;
        let pd_secs = t0.elapsed().as_secs_f64();
        let cent = optimum(&c, &inst)?;
        let gap = (pd.objective - cent.objective).abs() / cent.objective.abs();
        worst = worst.max(gap);
        t.push(vec![
            seed.into(),
            pd.objective.into(),
            cent.objective.into(),
            gap.into(),
            pd.iterations.into(),
            pd.converged.to_string().into(),
            pd_secs.into(),
            cent.secs.into(),
        ]);
    }
    let mut b = Bundle::default();
    b.tables.push(t);
    b.set("max_relative_gap", worst);
    Ok(b)
}
