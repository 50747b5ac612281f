//! Simulates MCDP on the three-cache line with the optimal timers and
//! compares empirical hit probabilities and occupancy with the analysis.

use cachenet::analysis::{timers_from_hits, Policy};
use cachenet::model::{ContentCatalog, Instance, UtilitySpec};
use cachenet::sim::{simulate_ttl, SimOptions};
use cachenet::solver::{solve, ProgramSpec, Variant};

fn main() -> cachenet::Result<()> {
    let catalog = ContentCatalog::zipf(100, 0.8, 1.0)?;
    let inst = Instance::line(&catalog, vec![30.0; 3], UtilitySpec::log(0.6))?;
    let opt = solve(&ProgramSpec::new(Variant::LUMcdp, &inst))?;
    let timers = inst
        .classes
        .iter()
        .zip(&opt.hits)
        .map(|(c, h)| timers_from_hits(Policy::Mcdp, c.rate, h))
        .collect::<cachenet::Result<Vec<_>>>()?;

    let requests = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1_000_000);
    let opts = SimOptions {
        requests,
        seed: 1,
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let report = simulate_ttl(&inst, Policy::Mcdp, &timers, &opts)?;
    println!("{requests} requests simulated in {:.2?}", t0.elapsed());

    let empirical = report.hit_probs();
    let residence = report.residence();
    let err = |rows: &[Vec<f64>]| {
        rows.iter()
            .zip(&opt.hits)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    };
    println!(
        "max |h_sim - h_opt| from request counts: {:.4}",
        err(&empirical)
    );
    println!(
        "max |h_sim - h_opt| from residence time: {:.4}",
        err(&residence)
    );
    for n in &report.nodes {
        println!(
            "cache {}: mean occupancy {:.3}, std {:.3}, peak {}",
            n.node + 1,
            n.mean(),
            n.std(),
            n.peak
        );
    }
    println!(
        "empirical utility {:.4}, optimum {:.4}",
        report.utility(&inst),
        opt.objective
    );
    Ok(())
}
