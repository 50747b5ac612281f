//! Primal-dual against the centralized solver on random 4x4 grids with
//! overlapping shortest-path routes.

use cachenet::analysis::Policy;
use cachenet::model::{
    build_topology, GridParams, Instance, TopologyKind, UtilitySpec, WeightRule, Workload,
};
use cachenet::primal_dual::{run_primal_dual, PrimalDualOptions};
use cachenet::solver::{solve_shared, SharedOptions};

fn main() -> cachenet::Result<()> {
    for seed in 1..=5 {
        let kind = TopologyKind::Grid {
            side: 4,
            params: GridParams {
                seed,
                ..Default::default()
            },
        };
        let net = build_topology(&kind, 30, 5.0)?;
        let paths = net.paths.len();
        let inst = Instance::new(
            net,
            30,
            &Workload::zipf(0.8),
            &WeightRule::Rate,
            UtilitySpec::log(0.6),
        )?;
        let t0 = std::time::Instant::now();
        let pd = run_primal_dual(
            &inst,
            &PrimalDualOptions {
                policy: Policy::Mcdp,
                ..Default::default()
            },
            None,
        )?;
        let t_pd = t0.elapsed();
        let t0 = std::time::Instant::now();
        let cent = solve_shared(&inst, &SharedOptions::default())?;
        let gap = (pd.objective - cent.objective).abs() / cent.objective.abs();
        println!(
            "seed {seed}: {paths} paths, {} classes; primal-dual {:.4} ({} it{}, {t_pd:.2?}), centralized {:.4} ({:.2?}), gap {:.2e}",
            inst.num_classes(),
            pd.objective,
            pd.iterations,
            if pd.converged { "" } else { ", averaged" },
            cent.objective,
            t0.elapsed(),
            gap
        );
    }
    Ok(())
}
