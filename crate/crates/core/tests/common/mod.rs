#![allow(dead_code, clippy::needless_range_loop)]

use cachenet::analysis::Policy;
use cachenet::model::{ContentCatalog, Instance, UtilitySpec};

/// Embedded transition matrix rebuilt from the replication rules. MCDP is
/// observed at request and expiry epochs, MCD at request epochs.
pub fn transition(policy: Policy, lambda: f64, timers: &[f64]) -> Vec<Vec<f64>> {
    let len = timers.len();
    let mut p = vec![vec![0.0; len + 1]; len + 1];
    match policy {
        Policy::Mcdp => {
            p[0][1] = 1.0;
            for l in 1..=len {
                let request_first = 1.0 - (-lambda * timers[l - 1]).exp();
                p[l][(l + 1).min(len)] += request_first;
                p[l][l - 1] += 1.0 - request_first;
            }
        }
        Policy::Mcd => {
            for l in 0..=len {
                let to = (l + 1).min(len);
                let kept = 1.0 - (-lambda * timers[to - 1]).exp();
                p[l][to] += kept;
                p[l][0] += 1.0 - kept;
            }
        }
    }
    p
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

/// Stationary vector by power iteration on the lazy chain `(P + I) / 2`,
/// accelerated by repeated squaring.
pub fn power_stationary(p: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| 0.5 * p[i][j] + if i == j { 0.5 } else { 0.0 })
                .collect()
        })
        .collect();
    for _ in 0..80 {
        m = matmul(&m, &m);
        for row in &mut m {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
    }
    let mut pi = m[0].clone();
    for _ in 0..200 {
        let next: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|i| pi[i] * p[i][j]).sum::<f64>() * 0.5 + 0.5 * pi[j])
            .collect();
        pi = next;
    }
    let s: f64 = pi.iter().sum();
    pi.iter().map(|x| x / s).collect()
}

/// Time-average hit probabilities at positions `1..=L` from the oracle chain.
pub fn oracle_hits(policy: Policy, lambda: f64, timers: &[f64]) -> Vec<f64> {
    let pi = power_stationary(&transition(policy, lambda, timers));
    let weights: Vec<f64> = match policy {
        Policy::Mcdp => {
            let mut s = vec![1.0 / lambda];
            s.extend(timers.iter().map(|&t| (1.0 - (-lambda * t).exp()) / lambda));
            pi.iter().zip(&s).map(|(p, s)| p * s).collect()
        }
        Policy::Mcd => pi,
    };
    let total: f64 = weights.iter().sum();
    weights[1..].iter().map(|w| w / total).collect()
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Three caches of capacity 30, 100 Zipf(0.8) contents, log utility.
pub fn reference_line(psi: f64) -> Instance {
    let cat = ContentCatalog::zipf(100, 0.8, 1.0).unwrap();
    Instance::line(&cat, vec![30.0; 3], UtilitySpec::log(psi)).unwrap()
}
