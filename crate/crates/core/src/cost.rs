//! Search, fetch and transfer costs on a path.

use serde::{Deserialize, Serialize};

use crate::analysis::{mcdp_chain, mcdp_hits_from_timers, Policy};
use crate::error::{Error, Result};

/// Non-decreasing scalar cost function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostFn {
    #[default]
    Identity,
    /// `a x + b` with `a >= 0`.
    Affine { a: f64, b: f64 },
    /// `x^k` with `k >= 1`.
    Power { k: f64 },
}

impl CostFn {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CostFn::Identity => Ok(()),
            CostFn::Affine { a, .. } if a >= 0.0 => Ok(()),
            CostFn::Power { k } if k >= 1.0 => Ok(()),
            other => Err(Error::Parameter(format!(
                "cost function {other:?} is not convex non-decreasing"
            ))),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            CostFn::Identity => x,
            CostFn::Affine { a, b } => a * x + b,
            CostFn::Power { k } => x.max(0.0).powf(k),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            CostFn::Identity => 1.0,
            CostFn::Affine { a, .. } => a,
            CostFn::Power { k } => k * x.max(0.0).powf(k - 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    #[serde(default)]
    pub search: CostFn,
    #[serde(default)]
    pub fetch: CostFn,
    #[serde(default)]
    pub transfer: CostFn,
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        self.fetch.validate()?;
        self.transfer.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct CostBreakdown {
    pub search: f64,
    pub fetch: f64,
    pub transfer: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(search: f64, fetch: f64, transfer: f64) -> Self {
        Self {
            search,
            fetch,
            transfer,
            total: search + fetch + transfer,
        }
    }
}

/// Expected number of hops a request travels: `sum_{l=0..L} (L-l+1) h_l`.
pub fn expected_hops(hits: &[f64]) -> f64 {
    let len = hits.len();
    let h0 = 1.0 - hits.iter().sum::<f64>();
    let mut s = (len + 1) as f64 * h0;
    for (l, &h) in hits.iter().enumerate() {
        s += (len - l) as f64 * h;
    }
    s
}

fn check_lengths(rates: &[f64], rows: usize) -> Result<()> {
    if rates.len() != rows {
        return Err(Error::Parameter(format!(
            "{} rates for {rows} contents",
            rates.len()
        )));
    }
    Ok(())
}

pub fn search_cost(rates: &[f64], hits: &[Vec<f64>], c: &CostFn) -> Result<f64> {
    check_lengths(rates, hits.len())?;
    Ok(rates
        .iter()
        .zip(hits)
        .map(|(&lam, h)| lam * c.value(expected_hops(h)))
        .sum())
}

/// Same form as [`search_cost`] with the fetch cost function.
pub fn fetch_cost(rates: &[f64], hits: &[Vec<f64>], c: &CostFn) -> Result<f64> {
    search_cost(rates, hits, c)
}

pub fn transfer_cost_mcd(rates: &[f64], hits: &[Vec<f64>], c: &CostFn) -> Result<f64> {
    check_lengths(rates, hits.len())?;
    Ok(rates
        .iter()
        .zip(hits)
        .map(|(&lam, h)| lam * c.value(1.0 - h.last().copied().unwrap_or(0.0)))
        .sum())
}

/// Long-run rate of MCDP copy movements for one content, per unit time.
pub fn mcdp_transfer_rate(lambda: f64, timers: &[f64]) -> Result<f64> {
    let chain = mcdp_chain(lambda, timers)?;
    let len = timers.len();
    let pi = &chain.stationary;
    let silent_expiry = pi[1] * (-lambda * timers[0]).exp();
    let silent_hit = pi[len] * -(-lambda * timers[len - 1]).exp_m1();
    let cycle: f64 = pi.iter().zip(&chain.sojourn).map(|(p, s)| p * s).sum();
    let moving = if len == 1 {
        pi[0]
    } else {
        1.0 - silent_expiry - silent_hit
    };
    Ok(moving / cycle)
}

/// MCDP transfer cost. Each content contributes `lambda c_m(rate / lambda)`,
/// which is the movement rate itself for the identity cost.
pub fn transfer_cost_mcdp(rates: &[f64], timers: &[Vec<f64>], c: &CostFn) -> Result<f64> {
    check_lengths(rates, timers.len())?;
    let mut total = 0.0;
    for (&lam, t) in rates.iter().zip(timers) {
        let r = mcdp_transfer_rate(lam, t)?;
        total += lam * c.value(r / lam);
    }
    Ok(total)
}

/// Cost breakdown of a timer configuration.
pub fn total_cost(
    policy: Policy,
    rates: &[f64],
    timers: &[Vec<f64>],
    spec: &CostSpec,
) -> Result<CostBreakdown> {
    check_lengths(rates, timers.len())?;
    let hits = rates
        .iter()
        .zip(timers)
        .map(|(&lam, t)| crate::analysis::hits_from_timers(policy, lam, t))
        .collect::<Result<Vec<_>>>()?;
    let transfer = match policy {
        Policy::Mcd => transfer_cost_mcd(rates, &hits, &spec.transfer)?,
        Policy::Mcdp => transfer_cost_mcdp(rates, timers, &spec.transfer)?,
    };
    Ok(CostBreakdown::new(
        search_cost(rates, &hits, &spec.search)?,
        fetch_cost(rates, &hits, &spec.fetch)?,
        transfer,
    ))
}

/// MCD cost written directly in hit probabilities.
pub fn mcd_cost_from_hits(
    rates: &[f64],
    hits: &[Vec<f64>],
    spec: &CostSpec,
) -> Result<CostBreakdown> {
    Ok(CostBreakdown::new(
        search_cost(rates, hits, &spec.search)?,
        fetch_cost(rates, hits, &spec.fetch)?,
        transfer_cost_mcd(rates, hits, &spec.transfer)?,
    ))
}

/// Gradient of the MCD total cost with respect to `h_l` of one content.
pub fn mcd_cost_gradient(lambda: f64, hits: &[f64], spec: &CostSpec) -> Vec<f64> {
    let s = expected_hops(hits);
    let hop = lambda * (spec.search.derivative(s) + spec.fetch.derivative(s));
    let len = hits.len();
    let mut g: Vec<f64> = (0..len).map(|l| -((l + 1) as f64) * hop).collect();
    let last = hits[len - 1];
    g[len - 1] -= lambda * spec.transfer.derivative(1.0 - last);
    g
}

/// Hit probabilities of a timer field under MCDP, convenience for reports.
pub fn mcdp_hits(rates: &[f64], timers: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    rates
        .iter()
        .zip(timers)
        .map(|(&lam, t)| mcdp_hits_from_timers(lam, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn search_examples() {
        let id = CostFn::Identity;
        assert!((search_cost(&[1.0], &[vec![0.5]], &id).unwrap() - 1.5).abs() < 1e-15);
        assert!((search_cost(&[1.0], &[vec![1.0]], &id).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mcd_transfer_examples() {
        let id = CostFn::Identity;
        assert_eq!(
            transfer_cost_mcd(&[1.0], &[vec![0.3, 1.0]], &id).unwrap(),
            0.0
        );
        assert!((transfer_cost_mcd(&[1.0], &[vec![0.25]], &id).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn mcdp_transfer_zero_timers_is_request_rate() {
        for len in 1..5 {
            let r = mcdp_transfer_rate(2.0, &vec![0.0; len]).unwrap();
            assert!((r - 2.0).abs() < 1e-12, "len={len}: {r}");
        }
    }

    #[test]
    fn mcdp_transfer_single_cache() {
        // pi = (1/3, 2/3), cycle = 1/3 + 2/3 * 1/2 = 2/3, moves = pi_0
        let r = mcdp_transfer_rate(1.0, &[LN_2]).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mcdp_transfer_matches_closed_form_rewrite() {
        // (1 - pi_1) / cycle + lambda (h_1 - h_L)
        let lam = 1.3;
        let t = [0.4, 1.1, 0.7];
        let chain = mcdp_chain(lam, &t).unwrap();
        let h = mcdp_hits_from_timers(lam, &t).unwrap();
        let cycle: f64 = chain
            .stationary
            .iter()
            .zip(&chain.sojourn)
            .map(|(p, s)| p * s)
            .sum();
        let alt = (1.0 - chain.stationary[1]) / cycle + lam * (h[0] - h[2]);
        assert!((mcdp_transfer_rate(lam, &t).unwrap() - alt).abs() < 1e-12);
    }

    #[test]
    fn breakdown_is_additive() {
        let spec = CostSpec::default();
        let b = total_cost(Policy::Mcd, &[1.0], &[vec![LN_2]], &spec).unwrap();
        assert!((b.search - 1.5).abs() < 1e-12);
        assert!((b.fetch - 1.5).abs() < 1e-12);
        assert!((b.transfer - 0.5).abs() < 1e-12);
        assert!((b.total - 3.5).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = CostSpec {
            search: CostFn::Power { k: 2.0 },
            fetch: CostFn::Identity,
            transfer: CostFn::Power { k: 1.5 },
        };
        let h = vec![0.2, 0.15, 0.1];
        let g = mcd_cost_gradient(0.8, &h, &spec);
        for l in 0..3 {
            let mut up = h.clone();
            let mut dn = h.clone();
            up[l] += 1e-6;
            dn[l] -= 1e-6;
            let f = |x: &Vec<f64>| {
                mcd_cost_from_hits(&[0.8], std::slice::from_ref(x), &spec)
                    .unwrap()
                    .total
            };
            let fd = (f(&up) - f(&dn)) / 2e-6;
            assert!((fd - g[l]).abs() < 1e-6, "{l}: {fd} vs {}", g[l]);
        }
    }

    #[test]
    fn invalid_cost_functions() {
        assert!(CostFn::Power { k: 0.5 }.validate().is_err());
        assert!(CostFn::Affine { a: -1.0, b: 0.0 }.validate().is_err());
    }
}
