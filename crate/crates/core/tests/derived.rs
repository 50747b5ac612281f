//! Worked examples checked against independent oracles. Frozen constants were
//! computed outside the crate and are asserted here.

mod common;

use cachenet::analysis::{hits_from_timers, mcd_chain, mcdp_chain, Policy};
use cachenet::cost::{search_cost, total_cost, CostFn, CostSpec};
use cachenet::experiment::{preset, timers_for};
use cachenet::model::{
    ContentCatalog, Instance, NetworkSpec, PathSpec, UtilitySpec, WeightRule, Workload,
};
use cachenet::online::{run_online, OnlineOptions};
use cachenet::primal_dual::{run_primal_dual, PrimalDualOptions};
use cachenet::sim::{simulate_shared, simulate_ttl, SimOptions};
use cachenet::solver::{
    shared_occupancy, solve, solve_shared, ProgramSpec, SharedOptions, Variant,
};

use common::{max_abs, oracle_hits, power_stationary, reference_line, transition};

const LN2: f64 = std::f64::consts::LN_2;

/// Reference line optimum and its search cost, from an interior-point solve of the
/// same program in an independent modelling tool.
const LINE_UTILITY: f64 = -2.1733881647;
const LINE_SEARCH: f64 = 1.9397567930;

#[test]
fn worked_chains_match_power_iteration() {
    let t = [LN2, LN2];
    let mcdp = mcdp_chain(1.0, &t).unwrap();
    let pi = power_stationary(&transition(Policy::Mcdp, 1.0, &t));
    assert!(max_abs(&pi, &[0.2, 0.4, 0.4]) < 1e-12);
    assert!(max_abs(&mcdp.stationary, &pi) < 1e-12);

    let single = power_stationary(&transition(Policy::Mcd, 1.0, &[LN2]));
    assert!(max_abs(&mcd_chain(1.0, &[LN2]).unwrap().stationary, &single) < 1e-12);
    assert!(max_abs(&single, &[0.5, 0.5]) < 1e-12);
    let two = power_stationary(&transition(Policy::Mcd, 1.0, &t));
    assert!(max_abs(&two, &[0.5, 0.25, 0.25]) < 1e-12);

    assert!(max_abs(&oracle_hits(Policy::Mcdp, 1.0, &t), &[1.0 / 3.0; 2]) < 1e-12);
    assert!(
        max_abs(
            &hits_from_timers(Policy::Mcdp, 1.0, &t).unwrap(),
            &[1.0 / 3.0; 2]
        ) < 1e-12
    );
    assert!(max_abs(&hits_from_timers(Policy::Mcd, 1.0, &t).unwrap(), &[0.25; 2]) < 1e-12);
}

fn simple_paths(adj: &[Vec<(usize, f64)>], from: usize, to: usize) -> Vec<f64> {
    fn walk(
        adj: &[Vec<(usize, f64)>],
        v: usize,
        to: usize,
        seen: &mut Vec<bool>,
        w: f64,
        out: &mut Vec<f64>,
    ) {
        if v == to {
            out.push(w);
            return;
        }
        for &(u, we) in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                walk(adj, u, to, seen, w + we, out);
                seen[u] = false;
            }
        }
    }
    let mut seen = vec![false; adj.len()];
    seen[from] = true;
    let mut out = Vec::new();
    walk(adj, from, to, &mut seen, 0.0, &mut out);
    out
}

#[test]
fn grid_paths_are_loop_free_and_weight_minimal() {
    for seed in 1..=5 {
        let mut cfg = preset("grid").unwrap();
        cfg.set_seed(seed);
        if let cachenet::experiment::NetworkConfig::Grid { seed: s, .. } = &mut cfg.network {
            *s = seed;
        }
        let net = cfg.network_spec().unwrap();
        assert_eq!(net.num_nodes(), 16);
        let mut adj = vec![Vec::new(); 16];
        for e in &net.edges {
            adj[e.a].push((e.b, e.weight));
            adj[e.b].push((e.a, e.weight));
        }
        let requesters: std::collections::BTreeSet<usize> =
            net.paths.iter().map(|p| p.requester()).collect();
        assert_eq!(requesters.len(), 12);
        for p in &net.paths {
            let mut sorted = p.nodes.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), p.nodes.len(), "loop in {:?}", p.nodes);
            for w in p.nodes.windows(2) {
                assert!(
                    adj[w[0]].iter().any(|&(u, _)| u == w[1]),
                    "{:?} is not a walk",
                    p.nodes
                );
            }
            let best = simple_paths(&adj, p.nodes[0], p.requester())
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            assert!((net.path_weight(&p.nodes) - best).abs() <= 1e-9 * best.max(1.0));
        }
    }
}

#[test]
fn line_search_cost_matches_independent_evaluation() {
    let inst = reference_line(0.6);
    let sol = solve(&ProgramSpec::new(Variant::LUMcdp, &inst)).unwrap();
    assert!((sol.objective - LINE_UTILITY).abs() < 1e-6);
    let rates: Vec<f64> = inst.classes.iter().map(|c| c.rate).collect();
    let by_hand: f64 = rates
        .iter()
        .zip(&sol.hits)
        .map(|(&lam, h)| {
            let miss = 1.0 - h.iter().sum::<f64>();
            lam * (4.0 * miss + 3.0 * h[0] + 2.0 * h[1] + h[2])
        })
        .sum();
    let lib = search_cost(&rates, &sol.hits, &CostFn::Identity).unwrap();
    assert!((lib - by_hand).abs() < 1e-12);
    assert!((lib - LINE_SEARCH).abs() < 1e-5);
}

fn single_cache(rate: f64) -> Instance {
    let cat = ContentCatalog::new(vec![rate], vec![rate]).unwrap();
    Instance::line(&cat, vec![1.0], UtilitySpec::log(1.0)).unwrap()
}

#[test]
fn mcdp_transfer_rate_matches_simulation() {
    let inst = single_cache(1.0);
    let opts = SimOptions {
        requests: 1_000_000,
        seed: 3,
        ..Default::default()
    };
    for t in [LN2, 1e-9] {
        let analytic = total_cost(Policy::Mcdp, &[1.0], &[vec![t]], &CostSpec::default())
            .unwrap()
            .transfer;
        let measured = simulate_ttl(&inst, Policy::Mcdp, &vec![vec![t]], &opts)
            .unwrap()
            .costs(&CostSpec::default())
            .transfer;
        assert!(
            (measured - analytic).abs() <= 0.02 * analytic,
            "T={t}: {measured} vs {analytic}"
        );
    }
    let limit = total_cost(Policy::Mcdp, &[1.0], &[vec![0.0]], &CostSpec::default())
        .unwrap()
        .transfer;
    assert!((limit - 1.0).abs() < 1e-12);
}

#[test]
fn lyapunov_monitor_decreases_after_burn_in() {
    let inst = reference_line(0.6);
    let run = run_online(&inst, &OnlineOptions::default(), None).unwrap();
    let y: Vec<f64> = run.trajectory.iter().map(|p| p.y).collect();
    assert!(y.iter().all(|&v| v >= -1e-9));
    let window = 10;
    let smoothed: Vec<f64> = y
        .chunks(window)
        .filter(|c| c.len() == window)
        .map(|c| c.iter().sum::<f64>() / window as f64)
        .collect();
    let burn = smoothed.len() / 5;
    for w in smoothed[burn..].windows(2) {
        assert!(
            w[1] <= w[0] + 1e-4,
            "smoothed Y rose from {} to {}",
            w[0],
            w[1]
        );
    }
    assert!(run.final_y() < y[0]);
}

/// Two leaves share a root cache of capacity `b0`; one content.
fn symmetric_overlap(b0: f64) -> Instance {
    let net = NetworkSpec {
        capacities: vec![b0, 1.0, 1.0],
        edges: Vec::new(),
        paths: vec![
            PathSpec {
                nodes: vec![0, 1],
                contents: vec![0],
            },
            PathSpec {
                nodes: vec![0, 2],
                contents: vec![0],
            },
        ],
    };
    Instance::new(
        net,
        1,
        &Workload::zipf(0.8),
        &WeightRule::Rate,
        UtilitySpec::log(0.6),
    )
    .unwrap()
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn symmetric_overlap_fixed_point() {
    let b0 = 0.3;
    let a = bisect(|x| 1.0 - (1.0 - x) * (1.0 - x) - b0, 0.0, 1.0);
    assert!((a - 0.163340).abs() < 1e-6);
    let inst = symmetric_overlap(b0);
    let expect = [a, 1.0 - a];
    let cent = solve_shared(&inst, &SharedOptions::default()).unwrap();
    let pd = run_primal_dual(
        &inst,
        &PrimalDualOptions {
            tol: 1e-8,
            ..Default::default()
        },
        None,
    )
    .unwrap();
    for h in &cent.hits {
        assert!(max_abs(h, &expect) < 1e-6, "{h:?} vs {expect:?}");
    }
    for h in &pd.hits {
        assert!(max_abs(h, &expect) < 1e-5, "{h:?} vs {expect:?}");
    }
    assert!(pd.converged);
    assert!((pd.objective - cent.objective).abs() < 1e-4);
    assert!((shared_occupancy(&inst, &inst.flatten(&pd.hits))[0] - b0).abs() < 1e-5);
}

#[test]
fn shared_occupancy_matches_product_form() {
    let inst = symmetric_overlap(0.3);
    let hits = vec![vec![0.2, 0.5], vec![0.12, 0.6]];
    let timers = timers_for(&inst, Policy::Mcdp, &hits).unwrap();
    let report = simulate_shared(
        &inst,
        Policy::Mcdp,
        &timers,
        &SimOptions {
            requests: 1_000_000,
            seed: 5,
            ..Default::default()
        },
    )
    .unwrap();
    let product = 1.0 - (1.0 - hits[0][0]) * (1.0 - hits[1][0]);
    let measured = report.nodes[0].mean();
    assert!(
        (measured - product).abs() <= 0.02 * product,
        "{measured} vs {product}"
    );
    assert!((shared_occupancy(&inst, &inst.flatten(&hits))[0] - product).abs() < 1e-12);
}

#[test]
fn report_utility_matches_hand_evaluation() {
    let cat = ContentCatalog::new(vec![2.0 / 3.0, 1.0 / 3.0], vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
    let inst = Instance::line(&cat, vec![1.0], UtilitySpec::log(1.0)).unwrap();
    let timers = timers_for(&inst, Policy::Mcdp, &[vec![2.0 / 3.0], vec![1.0 / 3.0]]).unwrap();
    let report = simulate_ttl(
        &inst,
        Policy::Mcdp,
        &timers,
        &SimOptions {
            requests: 200_000,
            seed: 9,
            ..Default::default()
        },
    )
    .unwrap();
    let c = &report.classes;
    let by_hand = (2.0 / 3.0) * (c[0].hits[0] as f64 / c[0].requests as f64).ln()
        + (1.0 / 3.0) * (c[1].hits[0] as f64 / c[1].requests as f64).ln();
    assert!((report.utility(&inst) - by_hand).abs() < 1e-12);
    let analytic = (2.0 / 3.0) * (2.0f64 / 3.0).ln() + (1.0 / 3.0) * (1.0f64 / 3.0).ln();
    assert!((report.utility(&inst) - analytic).abs() < 0.02);
}
