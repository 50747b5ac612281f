use std::time::Instant as Clock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{replicate, Arrivals, SimOptions, SimReport};
use crate::error::{Error, Result};
use crate::model::Instance;

/// Eviction rule of a capacity-bounded cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eviction {
    Lru,
    /// Per-node request counts that never decay.
    Lfu,
    Fifo,
    /// Uniformly random victim.
    Rr,
}

impl Eviction {
    pub const ALL: [Eviction; 4] = [Eviction::Lru, Eviction::Lfu, Eviction::Fifo, Eviction::Rr];

    pub fn label(self) -> &'static str {
        match self {
            Eviction::Lru => "lru",
            Eviction::Lfu => "lfu",
            Eviction::Fifo => "fifo",
            Eviction::Rr => "rr",
        }
    }
}

impl std::fmt::Display for Eviction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Eviction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.label() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Parameter(format!("unknown eviction policy {s:?}")))
    }
}

/// Simulates eviction caches with leave-copy-down replication: a request
/// searches its path from the requester towards the server, a hit at
/// position `l` copies the content to position `l + 1` (one cache closer to
/// the requester) and a miss inserts it at the server-adjacent cache. Each
/// node stores at most `floor(B_v)` contents; nodes with `B_v < 1` pass
/// requests and copies through to the next node towards the requester.
pub fn simulate_baseline(
    inst: &Instance,
    eviction: Eviction,
    opts: &SimOptions,
) -> Result<SimReport> {
    replicate(opts, |seed| {
        Caches::new(inst, eviction, opts).run(opts, seed)
    })
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    content: usize,
    last_used: u64,
    inserted: u64,
    since: f64,
}

struct Caches<'a> {
    inst: &'a Instance,
    eviction: Eviction,
    capacity: Vec<usize>,
    stored: Vec<Vec<Entry>>,
    counts: Vec<u64>,
    presence: Vec<f64>,
    last: Vec<f64>,
    clock: u64,
    measuring: bool,
    t_start: f64,
    report: SimReport,
}

impl<'a> Caches<'a> {
    fn new(inst: &'a Instance, eviction: Eviction, opts: &SimOptions) -> Self {
        let nodes = inst.num_nodes();
        let capacity: Vec<usize> = (0..nodes)
            .map(|v| inst.capacity(v).max(0.0).floor() as usize)
            .collect();
        Self {
            inst,
            eviction,
            stored: capacity.iter().map(|&b| Vec::with_capacity(b)).collect(),
            capacity,
            counts: vec![0; nodes * inst.n_contents],
            presence: vec![0.0; nodes * inst.n_contents],
            last: vec![0.0; nodes],
            clock: 0,
            measuring: false,
            t_start: 0.0,
            report: SimReport::empty(inst, format!("{eviction}+lcd"), true, opts),
        }
    }

    fn level_change(&mut self, v: usize, t: f64) {
        if self.measuring {
            self.report.nodes[v].add(self.stored[v].len(), t - self.last[v]);
        }
        self.last[v] = t;
    }

    fn leave(&mut self, v: usize, e: Entry, t: f64) {
        if self.measuring {
            self.presence[v * self.inst.n_contents + e.content] += t - e.since.max(self.t_start);
        }
    }

    fn insert<R: Rng>(&mut self, v: usize, content: usize, t: f64, rng: &mut R) -> bool {
        let cap = self.capacity[v];
        if cap == 0 {
            return false;
        }
        self.level_change(v, t);
        if self.stored[v].len() >= cap {
            let victim = match self.eviction {
                Eviction::Lru => argmin(&self.stored[v], |e| (e.last_used, e.content)),
                Eviction::Fifo => argmin(&self.stored[v], |e| (e.inserted, e.content)),
                Eviction::Lfu => {
                    let n = self.inst.n_contents;
                    let counts = &self.counts;
                    argmin(&self.stored[v], |e| {
                        (counts[v * n + e.content], e.last_used)
                    })
                }
                Eviction::Rr => rng.random_range(0..self.stored[v].len()),
            };
            let gone = self.stored[v].swap_remove(victim);
            self.leave(v, gone, t);
        }
        self.clock += 1;
        self.stored[v].push(Entry {
            content,
            last_used: self.clock,
            inserted: self.clock,
            since: t,
        });
        let peak = &mut self.report.nodes[v].peak;
        *peak = (*peak).max(self.stored[v].len());
        true
    }

    fn request<R: Rng>(&mut self, c: usize, t: f64, rng: &mut R) {
        let content = self.inst.classes[c].content;
        let nodes = &self.inst.path(c).nodes;
        let len = nodes.len();
        let mut found = None;
        for p in (0..len).rev() {
            let v = nodes[p];
            self.counts[v * self.inst.n_contents + content] += 1;
            if let Some(k) = self.stored[v].iter().position(|e| e.content == content) {
                self.clock += 1;
                self.stored[v][k].last_used = self.clock;
                found = Some(p);
                break;
            }
        }
        let from = found.map_or(0, |p| p + 1);
        let target = (from..len)
            .map(|p| nodes[p])
            .find(|&v| self.capacity[v] > 0);
        let moved = target.is_some_and(|v| self.insert(v, content, t, rng));
        if self.measuring {
            let s = &mut self.report.classes[c];
            let ev = &mut self.report.events;
            s.requests += 1;
            ev.requests += 1;
            let hops = match found {
                Some(p) => (len - p) as u64,
                None => (len + 1) as u64,
            };
            s.hops += hops;
            ev.hops += hops;
            match found {
                Some(p) => {
                    s.hits[p] += 1;
                    ev.hits += 1;
                }
                None => ev.misses += 1,
            }
            if moved {
                s.transfers += 1;
                ev.transfers += 1;
            }
        }
    }

    fn run(mut self, opts: &SimOptions, seed: u64) -> Result<SimReport> {
        let clock = Clock::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Some(mut arrivals) = Arrivals::new(self.inst)? else {
            return Ok(self.report);
        };
        let warm = opts.warmup_requests();
        let mut t = 0.0;
        for k in 0..opts.requests {
            let (time, c) = arrivals.next(&mut rng);
            t = time;
            if k == warm {
                self.measuring = true;
                self.t_start = t;
                self.last.iter_mut().for_each(|x| *x = t);
            }
            self.request(c, t, &mut rng);
        }
        if self.measuring {
            for v in 0..self.stored.len() {
                self.level_change(v, t);
                for e in std::mem::take(&mut self.stored[v]) {
                    self.leave(v, e, t);
                }
            }
            let n = self.inst.n_contents;
            for s in &mut self.report.classes {
                for (p, &v) in s.nodes.iter().enumerate() {
                    s.resident_time[p] = self.presence[v * n + s.content];
                }
            }
            self.report.measured_time = t - self.t_start;
        }
        self.report.seed = seed;
        self.report.wall_clock_secs = clock.elapsed().as_secs_f64();
        Ok(self.report)
    }
}

fn argmin<K: Ord>(entries: &[Entry], key: impl Fn(&Entry) -> K) -> usize {
    (0..entries.len())
        .min_by_key(|&k| key(&entries[k]))
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContentCatalog, UtilitySpec};

    fn line(n: usize, caps: Vec<f64>) -> Instance {
        let cat = ContentCatalog::zipf(n, 0.8, 1.0).unwrap();
        Instance::line(&cat, caps, UtilitySpec::log(0.6)).unwrap()
    }

    #[test]
    fn single_content_misses_once() {
        let inst = line(1, vec![1.0]);
        let opts = SimOptions {
            requests: 1000,
            warmup: 0.0,
            ..Default::default()
        };
        for ev in Eviction::ALL {
            let r = simulate_baseline(&inst, ev, &opts).unwrap();
            assert_eq!(r.events.misses, 1, "{ev}");
            assert_eq!(r.events.hits, 999);
        }
    }

    #[test]
    fn capacity_is_never_exceeded() {
        let inst = line(50, vec![3.0, 5.0, 2.0]);
        let opts = SimOptions {
            requests: 50_000,
            seed: 3,
            ..Default::default()
        };
        for ev in Eviction::ALL {
            let r = simulate_baseline(&inst, ev, &opts).unwrap();
            for (n, cap) in r.nodes.iter().zip([3, 5, 2]) {
                assert!(n.peak <= cap, "{ev}: node {} peak {}", n.node, n.peak);
            }
            let mass: f64 = r.nodes[1].histogram().iter().sum();
            assert!((mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_capacity_passes_through() {
        let inst = line(10, vec![0.0, 4.0]);
        let r = simulate_baseline(
            &inst,
            Eviction::Lru,
            &SimOptions {
                requests: 10_000,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.classes.iter().all(|s| s.hits[0] == 0));
        assert_eq!(r.nodes[0].peak, 0);
        assert!(r.events.hits > 0);
    }

    #[test]
    fn lcd_copies_one_step_towards_the_requester() {
        let inst = line(1, vec![1.0, 1.0, 1.0]);
        let r = simulate_baseline(
            &inst,
            Eviction::Fifo,
            &SimOptions {
                requests: 4,
                warmup: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        // miss, then hits at positions 0, 1, 2
        assert_eq!(r.classes[0].hits, vec![1, 1, 1]);
        assert_eq!(r.events.transfers, 3);
        assert_eq!(r.events.hops, 4 + 3 + 2 + 1);
    }
}
