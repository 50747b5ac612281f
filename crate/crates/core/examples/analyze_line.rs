//! Stationary hit probabilities of a single content on a three-cache path
//! and the inverse map from hit probabilities back to timers.

use cachenet::analysis::{hits_from_timers, mcd_chain, mcdp_chain, timers_from_hits, Policy};

fn main() -> cachenet::Result<()> {
    let lambda = 0.5;
    let timers = [1.0, 2.0, 4.0];
    for policy in [Policy::Mcdp, Policy::Mcd] {
        let h = hits_from_timers(policy, lambda, &timers)?;
        let back = timers_from_hits(policy, lambda, &h)?;
        let chain = match policy {
            Policy::Mcdp => mcdp_chain(lambda, &timers)?,
            Policy::Mcd => mcd_chain(lambda, &timers)?,
        };
        let err = back
            .iter()
            .zip(&timers)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "{policy}: h = {h:.6?}, miss = {:.6}",
            1.0 - h.iter().sum::<f64>()
        );
        println!(
            "  embedded stationary {:.6?}, balance residual {:.1e}",
            chain.stationary,
            chain.balance_residual()
        );
        println!("  timers recovered from h: {back:.6?} (max error {err:.1e})");
    }
    Ok(())
}
