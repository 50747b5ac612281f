use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Replication policy along a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Move copy down on a hit, push it up on expiry.
    Mcdp,
    /// Move copy down on a hit, drop it on expiry.
    Mcd,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::Mcdp => "mcdp",
            Policy::Mcd => "mcd",
        })
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcdp" => Ok(Policy::Mcdp),
            "mcd" => Ok(Policy::Mcd),
            other => Err(Error::Parameter(format!("unknown policy {other:?}"))),
        }
    }
}

/// Embedded chain of one content on one path. State 0 means the content is
/// only at the server; state `l` means the copy sits at position `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedChain {
    pub policy: Policy,
    pub transition: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
    /// Expected time between consecutive embedded epochs, by state.
    pub sojourn: Vec<f64>,
}

impl EmbeddedChain {
    /// `max |pi P - pi|`.
    pub fn balance_residual(&self) -> f64 {
        let n = self.stationary.len();
        (0..n)
            .map(|j| {
                let flow: f64 = (0..n)
                    .map(|i| self.stationary[i] * self.transition[i][j])
                    .sum();
                (flow - self.stationary[j]).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_inputs(lambda: f64, timers: &[f64]) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!(
            "arrival rate must be positive, got {lambda}"
        )));
    }
    if timers.is_empty() {
        return Err(Error::Parameter(
            "timer vector must cover at least one cache".into(),
        ));
    }
    if let Some((l, t)) = timers
        .iter()
        .enumerate()
        .find(|(_, t)| !(**t >= 0.0) || !t.is_finite())
    {
        return Err(Error::Parameter(format!(
            "timer at position {} is {t}",
            l + 1
        )));
    }
    Ok(())
}

/// `ln(e^x - 1)` for `x >= 0`, `-inf` at zero.
pub(crate) fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// `ln(1 - e^{-x})` for `x >= 0`, `-inf` at zero.
pub(crate) fn ln_one_minus_exp_neg(x: f64) -> f64 {
    if x > 0.7 {
        (-(-x).exp()).ln_1p()
    } else {
        (-(-x).exp_m1()).ln()
    }
}

/// Normalizes log-weights into probabilities.
pub(crate) fn softmax(logs: &[f64]) -> Vec<f64> {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|&x| (x - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Log-weights of the MCDP stationary vector, state 0 first.
pub(crate) fn mcdp_stationary_logs(lambda: f64, timers: &[f64]) -> Vec<f64> {
    let mut logs = Vec::with_capacity(timers.len() + 1);
    logs.push(0.0);
    let mut acc = 0.0;
    for &t in timers {
        let x = lambda * t;
        logs.push(acc + x);
        acc += ln_expm1(x);
    }
    logs
}

pub fn mcdp_transition(lambda: f64, timers: &[f64]) -> Vec<Vec<f64>> {
    let len = timers.len();
    let mut p = vec![vec![0.0; len + 1]; len + 1];
    p[0][1] = 1.0;
    for l in 1..=len {
        let down = (-lambda * timers[l - 1]).exp();
        p[l][l - 1] = down;
        let next = if l < len { l + 1 } else { l };
        p[l][next] += 1.0 - down;
    }
    p
}

pub fn mcd_transition(lambda: f64, timers: &[f64]) -> Vec<Vec<f64>> {
    let len = timers.len();
    let mut p = vec![vec![0.0; len + 1]; len + 1];
    for l in 0..=len {
        let next = (l + 1).min(len);
        let stay = -(-lambda * timers[next - 1]).exp_m1();
        p[l][next] += stay;
        p[l][0] += 1.0 - stay;
    }
    p
}

/// MCDP embedded chain observed at request and expiry epochs.
pub fn mcdp_chain(lambda: f64, timers: &[f64]) -> Result<EmbeddedChain> {
    check_inputs(lambda, timers)?;
    let stationary = softmax(&mcdp_stationary_logs(lambda, timers));
    let mut sojourn = vec![1.0 / lambda];
    sojourn.extend(timers.iter().map(|&t| -(-lambda * t).exp_m1() / lambda));
    Ok(EmbeddedChain {
        policy: Policy::Mcdp,
        transition: mcdp_transition(lambda, timers),
        stationary,
        sojourn,
    })
}

/// Log-weights of the MCD stationary vector, state 0 first.
pub(crate) fn mcd_stationary_logs(lambda: f64, timers: &[f64]) -> Vec<f64> {
    let len = timers.len();
    let mut logs = Vec::with_capacity(len + 1);
    logs.push(0.0);
    let mut acc = 0.0;
    for (j, &t) in timers.iter().enumerate() {
        let x = lambda * t;
        if j + 1 < len {
            acc += ln_one_minus_exp_neg(x);
            logs.push(acc);
        } else {
            logs.push(acc + ln_expm1(x));
        }
    }
    logs
}

/// MCD embedded chain observed at request epochs.
pub fn mcd_chain(lambda: f64, timers: &[f64]) -> Result<EmbeddedChain> {
    check_inputs(lambda, timers)?;
    let stationary = softmax(&mcd_stationary_logs(lambda, timers));
    Ok(EmbeddedChain {
        policy: Policy::Mcd,
        transition: mcd_transition(lambda, timers),
        stationary,
        sojourn: vec![1.0 / lambda; timers.len() + 1],
    })
}
