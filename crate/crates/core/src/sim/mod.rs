//! Discrete-event simulation of TTL cache networks under MCDP and MCD and of
//! classical eviction caches with leave-copy-down replication.

mod baseline;
mod ttl;

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Exp;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{CostBreakdown, CostSpec};
use crate::error::{Error, Result};
use crate::model::Instance;

pub use baseline::{simulate_baseline, Eviction};
pub use ttl::{simulate_shared, simulate_ttl};

/// One timer vector per request class, ordered like the path positions.
pub type TimerField = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOptions {
    /// Requests per replication.
    #[serde(default = "default_requests")]
    pub requests: u64,
    /// Fraction of the requests treated as warm-up and left out of the statistics.
    #[serde(default = "default_warmup")]
    pub warmup: f64,
    #[serde(default)]
    pub seed: u64,
    /// Independent runs with seeds `seed, seed + 1, ...`, merged into one report.
    #[serde(default = "default_replications")]
    pub replications: usize,
}

fn default_requests() -> u64 {
    1_000_000
}
fn default_warmup() -> f64 {
    0.1
}
fn default_replications() -> usize {
    1
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            requests: default_requests(),
            warmup: default_warmup(),
            seed: 0,
            replications: default_replications(),
        }
    }
}

impl SimOptions {
    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.warmup) {
            return Err(Error::Parameter(format!(
                "warm-up fraction must lie in [0, 1), got {}",
                self.warmup
            )));
        }
        if self.replications == 0 {
            return Err(Error::Parameter(
                "at least one replication is required".into(),
            ));
        }
        Ok(())
    }

    fn warmup_requests(&self) -> u64 {
        (self.warmup * self.requests as f64).floor() as u64
    }
}

/// Counts of one request class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub content: usize,
    pub path: usize,
    /// Node of each path position.
    pub nodes: Vec<usize>,
    pub requests: u64,
    /// Hits per path position.
    pub hits: Vec<u64>,
    /// Time the copy spent at each path position.
    pub resident_time: Vec<f64>,
    /// Hops travelled by requests, one per link plus one to reach the server.
    pub hops: u64,
    /// Copy insertions and movements between caches.
    pub transfers: u64,
}

impl ClassStats {
    fn new(content: usize, path: usize, nodes: Vec<usize>) -> Self {
        let len = nodes.len();
        Self {
            content,
            path,
            nodes,
            requests: 0,
            hits: vec![0; len],
            resident_time: vec![0.0; len],
            hops: 0,
            transfers: 0,
        }
    }

    /// Fraction of requests served at each position.
    pub fn hit_prob(&self) -> Vec<f64> {
        self.hits
            .iter()
            .map(|&h| {
                if self.requests == 0 {
                    0.0
                } else {
                    h as f64 / self.requests as f64
                }
            })
            .collect()
    }

    fn merge(&mut self, other: &Self) {
        self.requests += other.requests;
        self.hops += other.hops;
        self.transfers += other.transfers;
        for (a, b) in self.hits.iter_mut().zip(&other.hits) {
            *a += b;
        }
        for (a, b) in self.resident_time.iter_mut().zip(&other.resident_time) {
            *a += b;
        }
    }
}

/// Time-weighted occupancy of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub node: usize,
    pub capacity: f64,
    /// Time spent at each occupancy level.
    pub level_time: Vec<f64>,
    /// Largest occupancy seen.
    pub peak: usize,
}

impl NodeStats {
    fn new(node: usize, capacity: f64) -> Self {
        Self {
            node,
            capacity,
            level_time: Vec::new(),
            peak: 0,
        }
    }

    fn add(&mut self, level: usize, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        if self.level_time.len() <= level {
            self.level_time.resize(level + 1, 0.0);
        }
        self.level_time[level] += dt;
    }

    fn merge(&mut self, other: &Self) {
        if self.level_time.len() < other.level_time.len() {
            self.level_time.resize(other.level_time.len(), 0.0);
        }
        for (a, b) in self.level_time.iter_mut().zip(&other.level_time) {
            *a += b;
        }
        self.peak = self.peak.max(other.peak);
    }

    /// Probability mass of each occupancy level.
    pub fn histogram(&self) -> Vec<f64> {
        let total: f64 = self.level_time.iter().sum();
        if total == 0.0 {
            return vec![1.0];
        }
        self.level_time.iter().map(|t| t / total).collect()
    }

    pub fn mean(&self) -> f64 {
        self.histogram()
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        self.histogram()
            .iter()
            .enumerate()
            .map(|(k, p)| p * (k as f64 - m).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct EventTotals {
    pub requests: u64,
    pub hits: u64,
    pub misses: u64,
    pub expiries: u64,
    pub transfers: u64,
    pub hops: u64,
}

impl EventTotals {
    fn merge(&mut self, o: &Self) {
        self.requests += o.requests;
        self.hits += o.hits;
        self.misses += o.misses;
        self.expiries += o.expiries;
        self.transfers += o.transfers;
        self.hops += o.hops;
    }
}

/// Merged statistics of one or more simulation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// Policy label, e.g. `mcdp`, `mcd` or `lru+lcd`.
    pub policy: String,
    pub shared: bool,
    pub seed: u64,
    pub replications: usize,
    /// Requests simulated per replication, warm-up included.
    pub requests_per_run: u64,
    /// Simulated time inside the measurement windows.
    pub measured_time: f64,
    pub wall_clock_secs: f64,
    pub classes: Vec<ClassStats>,
    pub nodes: Vec<NodeStats>,
    pub events: EventTotals,
}

impl SimReport {
    fn empty(inst: &Instance, policy: String, shared: bool, opts: &SimOptions) -> Self {
        Self {
            policy,
            shared,
            seed: opts.seed,
            replications: 1,
            requests_per_run: opts.requests,
            measured_time: 0.0,
            wall_clock_secs: 0.0,
            classes: inst
                .classes
                .iter()
                .map(|c| {
                    ClassStats::new(c.content, c.path, inst.network.paths[c.path].nodes.clone())
                })
                .collect(),
            nodes: (0..inst.num_nodes())
                .map(|v| NodeStats::new(v, inst.capacity(v)))
                .collect(),
            events: EventTotals::default(),
        }
    }

    /// Adds the counts of another run of the same instance. The merge is
    /// associative, and the seed of the left operand is kept.
    pub fn merge(&mut self, other: &Self) {
        self.replications += other.replications;
        self.measured_time += other.measured_time;
        self.wall_clock_secs += other.wall_clock_secs;
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            a.merge(b);
        }
        for (a, b) in self.nodes.iter_mut().zip(&other.nodes) {
            a.merge(b);
        }
        self.events.merge(&other.events);
    }

    /// Empirical hit probabilities, one row per class.
    pub fn hit_probs(&self) -> Vec<Vec<f64>> {
        self.classes.iter().map(ClassStats::hit_prob).collect()
    }

    /// Time fraction the copy spent at each position, one row per class.
    pub fn residence(&self) -> Vec<Vec<f64>> {
        self.classes
            .iter()
            .map(|c| {
                c.resident_time
                    .iter()
                    .map(|t| {
                        if self.measured_time > 0.0 {
                            t / self.measured_time
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn mean_occupancy(&self) -> Vec<f64> {
        self.nodes.iter().map(NodeStats::mean).collect()
    }

    /// Aggregate utility of the empirical hit probabilities. Zero hit
    /// fractions under a utility that diverges at zero are evaluated at the
    /// utility's floor `h_min`.
    pub fn utility(&self, inst: &Instance) -> f64 {
        self.classes
            .iter()
            .zip(&inst.classes)
            .map(|(s, c)| {
                let len = s.hits.len();
                s.hit_prob()
                    .iter()
                    .enumerate()
                    .map(|(p, &h)| {
                        inst.utility.discount(p + 1, len) * inst.utility.value_clamped(c.weight, h)
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    /// Cost terms evaluated on the measured per-class request rates, hops per
    /// request and transfers per request.
    pub fn costs(&self, spec: &CostSpec) -> CostBreakdown {
        let mut search = 0.0;
        let mut fetch = 0.0;
        let mut transfer = 0.0;
        if self.measured_time > 0.0 {
            for s in self.classes.iter().filter(|s| s.requests > 0) {
                let rate = s.requests as f64 / self.measured_time;
                let hops = s.hops as f64 / s.requests as f64;
                search += rate * spec.search.value(hops);
                fetch += rate * spec.fetch.value(hops);
                transfer += rate * spec.transfer.value(s.transfers as f64 / s.requests as f64);
            }
        }
        CostBreakdown::new(search, fetch, transfer)
    }

    /// Long format: one row per class and path position.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            content: usize,
            node: usize,
            path: usize,
            requests: u64,
            hits: u64,
            hit_prob: f64,
        }
        let mut w = csv::Writer::from_writer(out);
        for s in &self.classes {
            let probs = s.hit_prob();
            for (p, &node) in s.nodes.iter().enumerate() {
                w.serialize(Row {
                    content: s.content,
                    node,
                    path: s.path,
                    requests: s.requests,
                    hits: s.hits[p],
                    hit_prob: probs[p],
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Occupancy histograms in long format: `node, level, mass`.
    pub fn write_histogram_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node", "level", "mass"])?;
        for n in &self.nodes {
            for (k, m) in n.histogram().iter().enumerate() {
                w.write_record([n.node.to_string(), k.to_string(), m.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Aggregate utility of a report.
pub fn report_utility(report: &SimReport, inst: &Instance) -> f64 {
    report.utility(inst)
}

/// Cost breakdown of a report.
pub fn report_costs(report: &SimReport, spec: &CostSpec) -> CostBreakdown {
    report.costs(spec)
}

/// Superposed Poisson request stream over the classes of an instance.
struct Arrivals {
    picker: WeightedIndex<f64>,
    gaps: Exp<f64>,
    time: f64,
}

impl Arrivals {
    fn new(inst: &Instance) -> Result<Option<Self>> {
        let rates: Vec<f64> = inst.classes.iter().map(|c| c.rate).collect();
        let total: f64 = rates.iter().sum();
        if !(total > 0.0) {
            return Ok(None);
        }
        let picker =
            WeightedIndex::new(&rates).map_err(|e| Error::Model(format!("request rates: {e}")))?;
        let gaps = Exp::new(total).map_err(|e| Error::Model(format!("request rate: {e}")))?;
        Ok(Some(Self {
            picker,
            gaps,
            time: 0.0,
        }))
    }

    fn next<R: Rng>(&mut self, rng: &mut R) -> (f64, usize) {
        self.time += self.gaps.sample(rng);
        (self.time, self.picker.sample(rng))
    }
}

/// Runs `run(seed)` for every replication in parallel and merges the
/// reports in seed order.
fn replicate<F>(opts: &SimOptions, run: F) -> Result<SimReport>
where
    F: Fn(u64) -> Result<SimReport> + Sync,
{
    opts.validate()?;
    let reports: Vec<SimReport> = (0..opts.replications as u64)
        .into_par_iter()
        .map(|r| run(opts.seed.wrapping_add(r)))
        .collect::<Result<_>>()?;
    let mut it = reports.into_iter();
    let mut out = it.next().expect("at least one replication");
    for r in it {
        out.merge(&r);
    }
    out.seed = opts.seed;
    Ok(out)
}
