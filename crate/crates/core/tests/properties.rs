mod common;

use proptest::prelude::*;

use cachenet::analysis::{
    check_feasible, hits_from_timers, mcd_chain, mcdp_chain, timers_from_hits, Policy,
};
use cachenet::cost::{mcd_cost_from_hits, total_cost, transfer_cost_mcd, CostFn, CostSpec};
use cachenet::model::{
    build_topology, zipf_popularity, ContentCatalog, GridParams, Instance, TopologyKind,
    UtilitySpec,
};
use cachenet::sim::{simulate_baseline, simulate_ttl, Eviction, SimOptions};
use cachenet::solver::{solve, ProgramSpec, Variant};

use common::{max_abs, oracle_hits, power_stationary, transition};

fn policy() -> impl Strategy<Value = Policy> {
    prop_oneof![Just(Policy::Mcdp), Just(Policy::Mcd)]
}

/// Rate and timers scaled so that `lambda T` stays in a well-conditioned range.
fn chain_params() -> impl Strategy<Value = (f64, Vec<f64>)> {
    (0.05f64..5.0, prop::collection::vec(0.02f64..4.0, 1..=5))
        .prop_map(|(lam, x)| (lam, x.iter().map(|v| v / lam).collect()))
}

/// Feasible hit vector for the policy, built from a random direction.
fn feasible_hits() -> impl Strategy<Value = (Policy, f64, Vec<f64>)> {
    (
        policy(),
        0.05f64..5.0,
        prop::collection::vec(0.01f64..1.0, 1..=5),
        0.05f64..0.95,
    )
        .prop_map(|(policy, lam, raw, total)| {
            let h = match policy {
                Policy::Mcdp => {
                    let s: f64 = raw.iter().sum();
                    raw.iter().map(|x| x / s * total).collect()
                }
                Policy::Mcd => {
                    let mut h = raw.clone();
                    let n = h.len();
                    if n > 1 {
                        h[..n - 1].sort_by(|a, b| b.total_cmp(a));
                        for k in 1..n - 1 {
                            h[k] = h[k].min(h[k - 1] * 0.999);
                        }
                    }
                    let load = if n > 1 {
                        2.0 * h[0] + h[1..].iter().sum::<f64>()
                    } else {
                        h[0]
                    };
                    h.iter().map(|x| x * total / load).collect()
                }
            };
            (policy, lam, h)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn zipf_sums_to_one_and_decreases(n in 1usize..500, alpha in 0.0f64..2.0) {
        let rho = zipf_popularity(n, alpha).unwrap();
        prop_assert!((rho.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(rho.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn utility_derivative_matches_differences(beta in prop_oneof![Just(1.0), 0.1f64..3.0], w in 0.1f64..5.0, h in 0.05f64..0.95) {
        let u = if beta == 1.0 { UtilitySpec::log(1.0) } else { UtilitySpec::beta_fair(beta, 1.0) };
        let eps = 1e-6 * h;
        let fd = (u.value(w, h + eps).unwrap() - u.value(w, h - eps).unwrap()) / (2.0 * eps);
        let d = u.derivative(w, h).unwrap();
        prop_assert!((fd - d).abs() <= 1e-6 * d.abs());
    }

    #[test]
    fn topology_paths_are_loop_free(seed in 0u64..1000, side in 2usize..6, depth in 1usize..5, n in 1usize..20) {
        let grid = TopologyKind::Grid { side, params: GridParams { requesters: side, seed, ..GridParams::default() } };
        let tree = TopologyKind::BinaryTree { depth, disjoint_contents: seed % 2 == 0 };
        for kind in [grid, tree] {
            let net = build_topology(&kind, n, 1.0).unwrap();
            for p in &net.paths {
                let mut s = p.nodes.clone();
                s.sort_unstable();
                s.dedup();
                prop_assert_eq!(s.len(), p.nodes.len());
            }
        }
    }

    #[test]
    fn stationary_matches_power_iteration(policy in policy(), (lam, t) in chain_params()) {
        let chain = match policy {
            Policy::Mcdp => mcdp_chain(lam, &t).unwrap(),
            Policy::Mcd => mcd_chain(lam, &t).unwrap(),
        };
        let p = transition(policy, lam, &t);
        prop_assert!(max_abs(&chain.stationary, &power_stationary(&p)) <= 1e-10);
        prop_assert!(chain.balance_residual() <= 1e-10);
    }

    #[test]
    fn hits_are_sojourn_weighted_stationary((lam, t) in chain_params()) {
        let h = hits_from_timers(Policy::Mcdp, lam, &t).unwrap();
        prop_assert!(max_abs(&h, &oracle_hits(Policy::Mcdp, lam, &t)) <= 1e-10);
    }

    #[test]
    fn forward_outputs_are_feasible(policy in policy(), (lam, t) in chain_params()) {
        let h = hits_from_timers(policy, lam, &t).unwrap();
        prop_assert!(check_feasible(policy, &h, 1e-12).is_ok());
    }

    #[test]
    fn hits_roundtrip_through_timers((policy, lam, h) in feasible_hits()) {
        prop_assume!(check_feasible(policy, &h, 0.0).is_ok());
        let t = timers_from_hits(policy, lam, &h).unwrap();
        prop_assert!(max_abs(&hits_from_timers(policy, lam, &t).unwrap(), &h) <= 1e-10);
    }

    #[test]
    fn timers_roundtrip_through_hits(policy in policy(), (lam, t) in chain_params()) {
        let h = hits_from_timers(policy, lam, &t).unwrap();
        let back = timers_from_hits(policy, lam, &h).unwrap();
        let rel = t.iter().zip(&back).map(|(a, b)| (a - b).abs() / a).fold(0.0, f64::max);
        prop_assert!(rel <= 1e-6, "{:?} vs {:?}", t, back);
    }

    #[test]
    fn costs_are_nonnegative_and_monotone_in_rate((policy, lam, h) in feasible_hits(), factor in 1.0f64..4.0, k in 1.0f64..3.0) {
        prop_assume!(check_feasible(policy, &h, 0.0).is_ok());
        let spec = CostSpec { search: CostFn::Power { k }, fetch: CostFn::Affine { a: 0.5, b: 1.0 }, transfer: CostFn::Identity };
        let at = |rate: f64| match policy {
            Policy::Mcd => mcd_cost_from_hits(&[rate], std::slice::from_ref(&h), &spec).unwrap(),
            Policy::Mcdp => total_cost(policy, &[rate], &[timers_from_hits(policy, rate, &h).unwrap()], &spec).unwrap(),
        };
        let (a, b) = (at(lam), at(lam * factor));
        for (x, y) in [(a.search, b.search), (a.fetch, b.fetch), (a.transfer, b.transfer)] {
            prop_assert!(x >= 0.0);
            prop_assert!(y >= x * (1.0 - 1e-9));
        }
    }

    #[test]
    fn mcd_transfer_decreases_in_last_hit(lam in 0.1f64..5.0, h in prop::collection::vec(0.0f64..0.3, 1..=4), bump in 0.0f64..0.1) {
        let mut up = h.clone();
        *up.last_mut().unwrap() += bump;
        let c = |x: &Vec<f64>| transfer_cost_mcd(&[lam], std::slice::from_ref(x), &CostFn::Identity).unwrap();
        prop_assert!(c(&up) <= c(&h));
    }
}

fn small_line(n: usize, len: usize, cap: f64, psi: f64) -> Instance {
    let cat = ContentCatalog::zipf(n, 0.8, 1.0).unwrap();
    Instance::line(&cat, vec![cap; len], UtilitySpec::log(psi)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_output_is_feasible(n in 2usize..20, len in 1usize..4, cap in 0.2f64..3.0, psi in 0.2f64..1.0, mcd in any::<bool>()) {
        let inst = small_line(n, len, cap, psi);
        let variant = if mcd { Variant::LUMcd } else { Variant::LUMcdp };
        let sol = solve(&ProgramSpec::new(variant, &inst)).unwrap();
        for h in &sol.hits {
            prop_assert!(h.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!(check_feasible(variant.policy(), h, -1e-8).is_ok());
        }
        for l in 0..len {
            prop_assert!(sol.hits.iter().map(|h| h[l]).sum::<f64>() <= cap + 1e-8);
        }
    }

    #[test]
    fn baseline_caches_never_exceed_capacity(n in 2usize..40, len in 1usize..4, cap in 1usize..6, seed in 0u64..100, e in 0usize..4) {
        let inst = small_line(n, len, cap as f64, 0.6);
        let opts = SimOptions { requests: 5_000, seed, ..Default::default() };
        let r = simulate_baseline(&inst, Eviction::ALL[e], &opts).unwrap();
        for node in &r.nodes {
            prop_assert!(node.peak as f64 <= node.capacity);
        }
    }

    #[test]
    fn simulation_is_deterministic(n in 2usize..20, len in 1usize..4, seed in 0u64..100, mcd in any::<bool>()) {
        let inst = small_line(n, len, 1.0, 0.6);
        let policy = if mcd { Policy::Mcd } else { Policy::Mcdp };
        let timers: Vec<Vec<f64>> = inst.classes.iter().map(|c| vec![1.0 / c.rate; len]).collect();
        let opts = SimOptions { requests: 5_000, seed, ..Default::default() };
        let mut a = simulate_ttl(&inst, policy, &timers, &opts).unwrap();
        let mut b = simulate_ttl(&inst, policy, &timers, &opts).unwrap();
        a.wall_clock_secs = 0.0;
        b.wall_clock_secs = 0.0;
        prop_assert_eq!(a, b);
        let mut x = simulate_baseline(&inst, Eviction::Rr, &opts).unwrap();
        let mut y = simulate_baseline(&inst, Eviction::Rr, &opts).unwrap();
        x.wall_clock_secs = 0.0;
        y.wall_clock_secs = 0.0;
        prop_assert_eq!(x, y);
    }

    #[test]
    fn hit_counts_bounded_by_requests(n in 2usize..20, len in 1usize..4, seed in 0u64..100) {
        let inst = small_line(n, len, 1.0, 0.6);
        let timers: Vec<Vec<f64>> = inst.classes.iter().map(|c| vec![0.5 / c.rate; len]).collect();
        let r = simulate_ttl(&inst, Policy::Mcdp, &timers, &SimOptions { requests: 5_000, seed, ..Default::default() }).unwrap();
        for c in &r.classes {
            prop_assert!(c.hits.iter().sum::<u64>() <= c.requests);
        }
        for node in &r.nodes {
            let mass: f64 = node.histogram().iter().sum();
            prop_assert!((mass - 1.0).abs() < 1e-9);
        }
    }
}
