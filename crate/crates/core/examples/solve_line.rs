//! Optimal hit probabilities on the three-cache line under MCDP and MCD.

use cachenet::analysis::timers_from_hits;
use cachenet::model::{ContentCatalog, Instance, UtilitySpec};
use cachenet::solver::{solve, ProgramSpec, Variant};

fn main() -> cachenet::Result<()> {
    let catalog = ContentCatalog::zipf(100, 0.8, 1.0)?;
    let inst = Instance::line(&catalog, vec![30.0; 3], UtilitySpec::log(0.6))?;
    for variant in [Variant::LUMcdp, Variant::LUMcd] {
        let t0 = std::time::Instant::now();
        let r = solve(&ProgramSpec::new(variant, &inst))?;
        println!(
            "{variant:?}: utility {:.6} after {} iterations ({:.2?}), stationarity {:.1e}, complementarity {:.1e}",
            r.objective,
            r.iterations,
            t0.elapsed(),
            r.residuals.stationarity,
            r.residuals.complementarity
        );
        let occ: Vec<f64> = (0..3).map(|l| r.hits.iter().map(|h| h[l]).sum()).collect();
        println!("  occupancy per cache: {occ:.4?}");
        for i in [0, 1, 9, 49, 99] {
            let t = timers_from_hits(variant.policy(), catalog.rates[i], &r.hits[i])?;
            println!(
                "  content {:>3}: h = {:.4?} T = {:.3?}",
                i + 1,
                r.hits[i],
                t
            );
        }
    }
    Ok(())
}
