//! Search, fetch and transfer costs of the optimal MCDP and MCD timers on the
//! three-cache line, against the event rates measured by simulation.

use cachenet::analysis::timers_from_hits;
use cachenet::cost::{total_cost, CostSpec};
use cachenet::model::{ContentCatalog, Instance, UtilitySpec};
use cachenet::sim::{simulate_ttl, SimOptions};
use cachenet::solver::{solve, ProgramSpec, Variant};

fn main() -> cachenet::Result<()> {
    let catalog = ContentCatalog::zipf(100, 0.8, 1.0)?;
    let inst = Instance::line(&catalog, vec![30.0; 3], UtilitySpec::log(0.6))?;
    let spec = CostSpec::default();
    let opts = SimOptions {
        requests: 1_000_000,
        seed: 7,
        ..Default::default()
    };
    for variant in [Variant::LUMcdp, Variant::LUMcd] {
        let policy = variant.policy();
        let opt = solve(&ProgramSpec::new(variant, &inst))?;
        let timers = catalog
            .rates
            .iter()
            .zip(&opt.hits)
            .map(|(&lam, h)| timers_from_hits(policy, lam, h))
            .collect::<cachenet::Result<Vec<_>>>()?;
        let analytic = total_cost(policy, &catalog.rates, &timers, &spec)?;
        let measured = simulate_ttl(&inst, policy, &timers, &opts)?.costs(&spec);
        println!("{policy}");
        for (name, a, m) in [
            ("search", analytic.search, measured.search),
            ("fetch", analytic.fetch, measured.fetch),
            ("transfer", analytic.transfer, measured.transfer),
        ] {
            println!(
                "  {name:<8} analytic {a:.5}  simulated {m:.5}  ({:+.2}%)",
                100.0 * (m - a) / a
            );
        }
    }

    let cost = solve(&ProgramSpec::new(Variant::McdCost, &inst))?;
    println!(
        "minimum MCD cost {:.5}; occupancy {:.3?}",
        cost.objective,
        (0..3)
            .map(|l| cost.hits.iter().map(|h| h[l]).sum::<f64>())
            .collect::<Vec<_>>()
    );
    Ok(())
}
