use super::chain::{check_inputs, ln_expm1, mcd_stationary_logs, softmax, Policy};
use crate::error::{Error, Result};

/// Time-average hit probabilities of MCDP, positions `1..=|p|`.
pub fn mcdp_hits_from_timers(lambda: f64, timers: &[f64]) -> Result<Vec<f64>> {
    check_inputs(lambda, timers)?;
    let mut logs = Vec::with_capacity(timers.len() + 1);
    logs.push(0.0);
    let mut acc = 0.0;
    for &t in timers {
        acc += ln_expm1(lambda * t);
        logs.push(acc);
    }
    let mut p = softmax(&logs);
    p.remove(0);
    Ok(p)
}

/// Request-epoch hit probabilities of MCD, positions `1..=|p|`.
pub fn mcd_hits_from_timers(lambda: f64, timers: &[f64]) -> Result<Vec<f64>> {
    check_inputs(lambda, timers)?;
    let mut p = softmax(&mcd_stationary_logs(lambda, timers));
    p.remove(0);
    Ok(p)
}

pub fn hits_from_timers(policy: Policy, lambda: f64, timers: &[f64]) -> Result<Vec<f64>> {
    match policy {
        Policy::Mcdp => mcdp_hits_from_timers(lambda, timers),
        Policy::Mcd => mcd_hits_from_timers(lambda, timers),
    }
}

pub fn timers_from_hits(policy: Policy, lambda: f64, hits: &[f64]) -> Result<Vec<f64>> {
    match policy {
        Policy::Mcdp => mcdp_timers_from_hits(lambda, hits),
        Policy::Mcd => mcd_timers_from_hits(lambda, hits),
    }
}

fn check_hits(lambda: f64, hits: &[f64]) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!(
            "arrival rate must be positive, got {lambda}"
        )));
    }
    if hits.is_empty() {
        return Err(Error::Parameter(
            "hit vector must cover at least one cache".into(),
        ));
    }
    if let Some((l, h)) = hits
        .iter()
        .enumerate()
        .find(|(_, h)| !(**h >= 0.0 && **h <= 1.0))
    {
        return Err(Error::InfeasibleHits(format!(
            "h at position {} is {h}",
            l + 1
        )));
    }
    let total: f64 = hits.iter().sum();
    if total >= 1.0 {
        return Err(Error::InfeasibleHits(format!(
            "hit probabilities sum to {total} >= 1"
        )));
    }
    Ok(1.0 - total)
}

/// `ln(1 + num/den)` with `0/0 -> 0`.
fn log_ratio_up(num: f64, den: f64, position: usize) -> Result<f64> {
    if num == 0.0 {
        return Ok(0.0);
    }
    if den == 0.0 {
        return Err(Error::InfeasibleHits(format!(
            "h at position {position} is positive while its predecessor is zero"
        )));
    }
    Ok((num / den).ln_1p())
}

/// `-ln(1 - num/den)` with `0/0 -> 0`.
fn log_ratio_down(num: f64, den: f64, position: usize) -> Result<f64> {
    if num == 0.0 {
        return Ok(0.0);
    }
    if num > den {
        return Err(Error::InfeasibleHits(format!(
            "ordering violated at position {position}: {num} > {den}"
        )));
    }
    if num == den {
        return Err(Error::InfiniteTimer {
            position,
            detail: "equal consecutive hit probabilities need an infinite timer".into(),
        });
    }
    Ok(-(-num / den).ln_1p())
}

/// Inverse of [`mcdp_hits_from_timers`]. Requires `sum h < 1`.
pub fn mcdp_timers_from_hits(lambda: f64, hits: &[f64]) -> Result<Vec<f64>> {
    let h0 = check_hits(lambda, hits)?;
    let mut timers = Vec::with_capacity(hits.len());
    let mut prev = h0;
    for (l, &h) in hits.iter().enumerate() {
        timers.push(log_ratio_up(h, prev, l + 1)? / lambda);
        prev = h;
    }
    Ok(timers)
}

/// Inverse of [`mcd_hits_from_timers`]. Requires `sum h < 1` and the chain
/// `h_{|p|-1} <= ... <= h_1 <= h_0`, strict where the timer must be finite.
pub fn mcd_timers_from_hits(lambda: f64, hits: &[f64]) -> Result<Vec<f64>> {
    let h0 = check_hits(lambda, hits)?;
    let len = hits.len();
    let mut timers = Vec::with_capacity(len);
    let mut prev = h0;
    for (l, &h) in hits.iter().enumerate() {
        let t = if l + 1 < len {
            log_ratio_down(h, prev, l + 1)?
        } else {
            log_ratio_up(h, prev, l + 1)?
        };
        timers.push(t / lambda);
        prev = h;
    }
    Ok(timers)
}

/// Checks that `hits` lies in the feasible set of `policy`, with `slack`
/// required on the strict inequalities.
pub fn check_feasible(policy: Policy, hits: &[f64], slack: f64) -> Result<()> {
    let total: f64 = hits.iter().sum();
    if hits.iter().any(|&h| !(h >= 0.0)) || total > 1.0 - slack {
        return Err(Error::InfeasibleHits(format!("sum of hits is {total}")));
    }
    if policy == Policy::Mcd && hits.len() >= 2 {
        let mut prev = 1.0 - total;
        for (l, &h) in hits[..hits.len() - 1].iter().enumerate() {
            if h > prev - slack && h > 0.0 {
                return Err(Error::InfeasibleHits(format!(
                    "ordering violated at position {}",
                    l + 1
                )));
            }
            prev = h;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn mcdp_forward_examples() {
        let h = mcdp_hits_from_timers(1.0, &[LN_2]).unwrap();
        assert!((h[0] - 0.5).abs() < 1e-15);
        let h = mcdp_hits_from_timers(1.0, &[LN_2, LN_2]).unwrap();
        assert!((h[0] - 1.0 / 3.0).abs() < 1e-15 && (h[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(mcdp_hits_from_timers(1.0, &[0.0; 4]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn mcdp_inverse_examples() {
        let t = mcdp_timers_from_hits(1.0, &[1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((t[0] - LN_2).abs() < 1e-12 && (t[1] - LN_2).abs() < 1e-12);
        assert_eq!(mcdp_timers_from_hits(1.0, &[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn mcdp_inverse_errors() {
        assert!(matches!(
            mcdp_timers_from_hits(1.0, &[0.5, 0.5]),
            Err(Error::InfeasibleHits(_))
        ));
        assert!(matches!(
            mcdp_timers_from_hits(1.0, &[0.0, 0.3]),
            Err(Error::InfeasibleHits(_))
        ));
    }

    #[test]
    fn mcd_examples() {
        let h = mcd_hits_from_timers(1.0, &[LN_2, LN_2]).unwrap();
        assert!((h[0] - 0.25).abs() < 1e-15 && (h[1] - 0.25).abs() < 1e-15);
        let t = mcd_timers_from_hits(1.0, &[0.25, 0.25]).unwrap();
        assert!((t[0] - LN_2).abs() < 1e-12 && (t[1] - LN_2).abs() < 1e-12);
        assert_eq!(mcd_timers_from_hits(1.0, &[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn mcd_inverse_errors() {
        // h_1 == h_0 needs an infinite first timer
        assert!(matches!(
            mcd_timers_from_hits(1.0, &[0.25, 0.5]),
            Err(Error::InfiniteTimer { position: 1, .. })
        ));
        // h_1 > h_0
        assert!(matches!(
            mcd_timers_from_hits(1.0, &[0.45, 0.2]),
            Err(Error::InfeasibleHits(_))
        ));
        assert!(matches!(
            mcd_timers_from_hits(1.0, &[0.6, 0.6]),
            Err(Error::InfeasibleHits(_))
        ));
    }

    #[test]
    fn single_cache_matches_exponential() {
        let lambda: f64 = 2.5;
        let t: f64 = 0.37;
        let expected = -(-lambda * t).exp_m1();
        // MCDP single cache: h = (e^x - 1)/e^x
        let h = mcdp_hits_from_timers(lambda, &[t]).unwrap()[0];
        assert!((h - expected).abs() < 1e-15);
        // MCD single cache: pi_1 = expm1(x)/(1+expm1(x)) = 1 - e^{-x}
        let h = mcd_hits_from_timers(lambda, &[t]).unwrap()[0];
        assert!((h - expected).abs() < 1e-15);
    }

    #[test]
    fn feasibility_check() {
        assert!(check_feasible(Policy::Mcdp, &[0.3, 0.3], 1e-9).is_ok());
        assert!(check_feasible(Policy::Mcdp, &[0.6, 0.4], 1e-9).is_err());
        assert!(check_feasible(Policy::Mcd, &[0.2, 0.3, 0.1], 1e-9).is_err());
        assert!(check_feasible(Policy::Mcd, &[0.3, 0.2, 0.4], 1e-9).is_err());
        assert!(check_feasible(Policy::Mcd, &[0.2, 0.1, 0.4], 1e-9).is_ok());
    }
}
