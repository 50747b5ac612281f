//! Optimized MCDP against LRU, LFU, FIFO and RR with leave-copy-down on the
//! three-cache line, normalized to the MCDP utility.

use cachenet::experiment::{compare_runs, preset};

fn main() -> cachenet::Result<()> {
    let mut cfg = preset("fig9")?;
    cfg.simulation.replications = 2;
    let inst = cfg.instance()?;
    let (optimum, mcdp, rows) = compare_runs(&cfg, &inst)?;
    println!("MCDP optimum {optimum:.4}, simulated {mcdp:.4}");
    for r in rows {
        println!(
            "  {:<9} utility {:>9.4}  normalized {:>7.3}  search {:.3}  transfer {:.3}",
            format!("{}+lcd", r.eviction),
            r.utility,
            r.normalized,
            r.cost.search,
            r.cost.transfer
        );
    }
    Ok(())
}
