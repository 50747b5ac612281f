use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::time::Instant as Clock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{replicate, Arrivals, SimOptions, SimReport, TimerField};
use crate::analysis::Policy;
use crate::error::{Error, Result};
use crate::model::Instance;

/// Simulates MCDP or MCD with a fixed timer field. Every class keeps its own
/// copy, so occupancy counts one copy per class.
pub fn simulate_ttl(
    inst: &Instance,
    policy: Policy,
    timers: &TimerField,
    opts: &SimOptions,
) -> Result<SimReport> {
    run(inst, policy, timers, opts, false)
}

/// Like [`simulate_ttl`], but paths that meet at a node share one physical
/// copy per content. Each path keeps its own logical state and scores hits
/// only against it; a node holds a content while any path places it there.
pub fn simulate_shared(
    inst: &Instance,
    policy: Policy,
    timers: &TimerField,
    opts: &SimOptions,
) -> Result<SimReport> {
    run(inst, policy, timers, opts, true)
}

fn run(
    inst: &Instance,
    policy: Policy,
    timers: &TimerField,
    opts: &SimOptions,
    shared: bool,
) -> Result<SimReport> {
    if timers.len() != inst.num_classes() {
        return Err(Error::Parameter(format!(
            "{} timer rows for {} classes",
            timers.len(),
            inst.num_classes()
        )));
    }
    for (c, t) in timers.iter().enumerate() {
        if t.len() != inst.path_len(c) {
            return Err(Error::Parameter(format!(
                "class {c}: {} timers for a path of {}",
                t.len(),
                inst.path_len(c)
            )));
        }
        if let Some(p) = t.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InfiniteTimer {
                position: p,
                detail: format!("class {c} has timer {}", t[p]),
            });
        }
    }
    replicate(opts, |seed| {
        World::new(inst, policy, timers, shared, opts).run(opts, seed)
    })
}

#[derive(Debug, Clone, Copy)]
struct Expiry {
    time: f64,
    node: usize,
    content: usize,
    class: usize,
    generation: u32,
}

impl Ord for Expiry {
    fn cmp(&self, o: &Self) -> Ordering {
        self.time
            .total_cmp(&o.time)
            .then(self.node.cmp(&o.node))
            .then(self.content.cmp(&o.content))
            .then(self.class.cmp(&o.class))
            .then(self.generation.cmp(&o.generation))
    }
}

impl PartialOrd for Expiry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl PartialEq for Expiry {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Expiry {}

struct World<'a> {
    inst: &'a Instance,
    policy: Policy,
    timers: &'a TimerField,
    shared: bool,
    /// 1-based position of each class's copy, 0 when only the server has it.
    pos: Vec<usize>,
    generation: Vec<u32>,
    since: Vec<f64>,
    /// Logical copies per `(node, content)`, used in shared mode.
    copies: Vec<u32>,
    occupancy: Vec<usize>,
    last: Vec<f64>,
    measuring: bool,
    heap: BinaryHeap<Reverse<Expiry>>,
    report: SimReport,
}

impl<'a> World<'a> {
    fn new(
        inst: &'a Instance,
        policy: Policy,
        timers: &'a TimerField,
        shared: bool,
        opts: &SimOptions,
    ) -> Self {
        let n = inst.num_classes();
        Self {
            inst,
            policy,
            timers,
            shared,
            pos: vec![0; n],
            generation: vec![0; n],
            since: vec![0.0; n],
            copies: vec![
                0;
                if shared {
                    inst.num_nodes() * inst.n_contents
                } else {
                    0
                }
            ],
            occupancy: vec![0; inst.num_nodes()],
            last: vec![0.0; inst.num_nodes()],
            measuring: false,
            heap: BinaryHeap::new(),
            report: SimReport::empty(inst, policy.to_string(), shared, opts),
        }
    }

    fn node_of(&self, c: usize, pos: usize) -> usize {
        self.inst.path(c).nodes[pos - 1]
    }

    fn shift(&mut self, v: usize, t: f64, up: bool) {
        if self.measuring {
            self.report.nodes[v].add(self.occupancy[v], t - self.last[v]);
        }
        self.last[v] = t;
        if up {
            self.occupancy[v] += 1;
            let peak = &mut self.report.nodes[v].peak;
            *peak = (*peak).max(self.occupancy[v]);
        } else {
            self.occupancy[v] -= 1;
        }
    }

    fn arrive(&mut self, v: usize, content: usize, t: f64) {
        if self.shared {
            let k = v * self.inst.n_contents + content;
            self.copies[k] += 1;
            if self.copies[k] > 1 {
                return;
            }
        }
        self.shift(v, t, true);
    }

    fn depart(&mut self, v: usize, content: usize, t: f64) {
        if self.shared {
            let k = v * self.inst.n_contents + content;
            self.copies[k] -= 1;
            if self.copies[k] > 0 {
                return;
            }
        }
        self.shift(v, t, false);
    }

    /// Moves class `c`'s copy to `new` (0 removes it) with a fresh timer.
    fn place(&mut self, c: usize, t: f64, new: usize) {
        let content = self.inst.classes[c].content;
        let old = self.pos[c];
        if old > 0 {
            if self.measuring {
                self.report.classes[c].resident_time[old - 1] += t - self.since[c];
            }
            if old != new {
                self.depart(self.node_of(c, old), content, t);
            }
        }
        self.since[c] = t;
        self.generation[c] = self.generation[c].wrapping_add(1);
        self.pos[c] = new;
        if new > 0 {
            let node = self.node_of(c, new);
            if old != new {
                self.arrive(node, content, t);
            }
            self.heap.push(Reverse(Expiry {
                time: t + self.timers[c][new - 1],
                node,
                content,
                class: c,
                generation: self.generation[c],
            }));
        }
    }

    fn start_measuring(&mut self, t: f64) {
        self.measuring = true;
        self.last.iter_mut().for_each(|x| *x = t);
        self.since.iter_mut().for_each(|x| *x = t);
    }

    fn expire(&mut self, e: Expiry) {
        let c = e.class;
        if e.generation != self.generation[c] {
            return;
        }
        let l = self.pos[c];
        if self.measuring {
            self.report.events.expiries += 1;
        }
        let target = match self.policy {
            Policy::Mcdp if l >= 2 => {
                if self.measuring {
                    self.report.classes[c].transfers += 1;
                    self.report.events.transfers += 1;
                }
                l - 1
            }
            _ => 0,
        };
        self.place(c, e.time, target);
    }

    fn request(&mut self, c: usize, t: f64) {
        let len = self.inst.path_len(c);
        let l = self.pos[c];
        let target = if l > 0 { (l + 1).min(len) } else { 1 };
        if self.measuring {
            let s = &mut self.report.classes[c];
            let ev = &mut self.report.events;
            s.requests += 1;
            ev.requests += 1;
            let hops = (len + 1 - l) as u64;
            s.hops += hops;
            ev.hops += hops;
            if l > 0 {
                s.hits[l - 1] += 1;
                ev.hits += 1;
            } else {
                ev.misses += 1;
            }
            if target != l {
                s.transfers += 1;
                ev.transfers += 1;
            }
        }
        self.place(c, t, target);
    }

    fn run(mut self, opts: &SimOptions, seed: u64) -> Result<SimReport> {
        let clock = Clock::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Some(mut arrivals) = Arrivals::new(self.inst)? else {
            return Ok(self.report);
        };
        let warm = opts.warmup_requests();
        let mut t_start = 0.0;
        let mut t = 0.0;
        for k in 0..opts.requests {
            let (time, c) = arrivals.next(&mut rng);
            t = time;
            while let Some(&Reverse(e)) = self.heap.peek() {
                if e.time > t {
                    break;
                }
                self.heap.pop();
                self.expire(e);
            }
            if k == warm {
                self.start_measuring(t);
                t_start = t;
            }
            self.request(c, t);
        }
        if self.measuring {
            for v in 0..self.occupancy.len() {
                self.report.nodes[v].add(self.occupancy[v], t - self.last[v]);
            }
            for c in 0..self.pos.len() {
                if self.pos[c] > 0 {
                    self.report.classes[c].resident_time[self.pos[c] - 1] += t - self.since[c];
                }
            }
            self.report.measured_time = t - t_start;
        }
        self.report.seed = seed;
        self.report.wall_clock_secs = clock.elapsed().as_secs_f64();
        Ok(self.report)
    }
}
