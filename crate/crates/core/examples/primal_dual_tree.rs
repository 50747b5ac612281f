//! Primal-dual prices on the seven-node binary tree with shared contents,
//! checked against the centralized solver.

use cachenet::analysis::Policy;
use cachenet::model::{build_topology, Instance, TopologyKind, UtilitySpec, WeightRule, Workload};
use cachenet::primal_dual::{run_primal_dual, PrimalDualOptions};
use cachenet::solver::{solve_shared, SharedOptions};

fn main() -> cachenet::Result<()> {
    let kind = TopologyKind::BinaryTree {
        depth: 3,
        disjoint_contents: false,
    };
    let net = build_topology(&kind, 100, 10.0)?;
    let inst = Instance::new(
        net,
        100,
        &Workload::zipf(1.2),
        &WeightRule::Rate,
        UtilitySpec::log(0.6),
    )?;

    for policy in [Policy::Mcdp, Policy::Mcd] {
        let t0 = std::time::Instant::now();
        let pd = run_primal_dual(
            &inst,
            &PrimalDualOptions {
                policy,
                record_every: 10,
                ..Default::default()
            },
            None,
        )?;
        let t_pd = t0.elapsed();
        let t0 = std::time::Instant::now();
        let cent = solve_shared(
            &inst,
            &SharedOptions {
                policy,
                ..Default::default()
            },
        )?;
        let t_cent = t0.elapsed();

        println!("{policy}:");
        println!(
            "  primal-dual  {:.6} in {} iterations ({t_pd:.2?})",
            pd.objective, pd.iterations
        );
        println!("  centralized  {:.6} ({t_cent:.2?})", cent.objective);
        println!(
            "  relative gap {:.2e}",
            (pd.objective - cent.objective).abs() / cent.objective.abs()
        );
        println!(
            "  slackness    capacity {:.2e}  budget {:.2e}",
            pd.capacity_slackness, pd.budget_slackness
        );
        println!("  node prices  {:.4?}", pd.dual.nu);
        println!("  occupancy    {:.4?}", pd.occupancy);
        for p in &pd.trajectory {
            println!(
                "    k = {:>4}  objective {:.6}  |grad| {:.3e}",
                p.iteration, p.objective, p.gradient_norm
            );
        }
    }
    Ok(())
}
