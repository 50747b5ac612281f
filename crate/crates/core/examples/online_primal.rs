//! Online primal controller on the three-cache line, compared with the
//! centralized optimum.

use cachenet::model::{ContentCatalog, Instance, UtilitySpec};
use cachenet::online::{run_online, OnlineOptions};
use cachenet::solver::{solve, ProgramSpec, Variant};

fn main() -> cachenet::Result<()> {
    let catalog = ContentCatalog::zipf(100, 0.8, 1.0)?;
    let inst = Instance::line(&catalog, vec![30.0; 3], UtilitySpec::log(0.6))?;
    let optimum = solve(&ProgramSpec::new(Variant::LUMcdp, &inst))?;

    let opts = OnlineOptions {
        requests: 2_000_000,
        checkpoint: 200_000,
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let run = run_online(&inst, &opts, None)?;
    println!(
        "{} requests in {:.2?}, {} step halvings",
        opts.requests,
        t0.elapsed(),
        run.halvings
    );
    for p in &run.trajectory {
        println!("  k = {:>8}  Z = {:.8}  Y = {:.3e}", p.k, p.z, p.y);
    }

    let online = inst.unflatten(&run.state.hits);
    let gap = online
        .iter()
        .zip(&optimum.hits)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    println!("max |h_online - h_opt| = {gap:.2e}");
    println!("occupancy per cache: {:.4?}", run.state.occupancy);
    for i in [0, 9, 99] {
        println!(
            "  content {:>3}: online {:.4?}  optimum {:.4?}",
            i + 1,
            online[i],
            optimum.hits[i]
        );
    }
    Ok(())
}
