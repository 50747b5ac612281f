use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

/// A request path. `nodes[0]` is the cache adjacent to the server (position 1),
/// the last node is the requester (position `|p|`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub nodes: Vec<usize>,
    /// Contents requested along this path.
    pub contents: Vec<usize>,
}

impl PathSpec {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn requester(&self) -> usize {
        *self.nodes.last().expect("validated path is non-empty")
    }

    /// 1-based position of `node` on the path.
    pub fn position_of(&self, node: usize) -> Option<usize> {
        self.nodes.iter().position(|&v| v == node).map(|p| p + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Capacity `B_v` per node, in expected-content units.
    pub capacities: Vec<f64>,
    #[serde(default)]
    pub edges: Vec<Edge>,
    pub paths: Vec<PathSpec>,
}

impl NetworkSpec {
    pub fn num_nodes(&self) -> usize {
        self.capacities.len()
    }

    pub fn validate(&self, n_contents: usize) -> Result<()> {
        let nodes = self.num_nodes();
        for (v, &b) in self.capacities.iter().enumerate() {
            if !(b >= 0.0) || !b.is_finite() {
                return Err(Error::Model(format!("node {v} has invalid capacity {b}")));
            }
        }
        for e in &self.edges {
            if e.a >= nodes || e.b >= nodes {
                return Err(Error::Model(format!(
                    "edge ({}, {}) references a missing node",
                    e.a, e.b
                )));
            }
            if !(e.weight >= 0.0) {
                return Err(Error::Model(format!(
                    "edge ({}, {}) has negative weight",
                    e.a, e.b
                )));
            }
        }
        for (p, path) in self.paths.iter().enumerate() {
            if path.nodes.is_empty() {
                return Err(Error::Model(format!("path {p} is empty")));
            }
            let mut seen = vec![false; nodes];
            for &v in &path.nodes {
                if v >= nodes {
                    return Err(Error::Model(format!("path {p} visits missing node {v}")));
                }
                if seen[v] {
                    return Err(Error::Model(format!("path {p} visits node {v} twice")));
                }
                seen[v] = true;
            }
            if let Some(&i) = path.contents.iter().find(|&&i| i >= n_contents) {
                return Err(Error::Model(format!(
                    "path {p} requests content {i} outside the catalog"
                )));
            }
        }
        Ok(())
    }

    fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for e in &self.edges {
            adj[e.a].push((e.b, e.weight));
            adj[e.b].push((e.a, e.weight));
        }
        for list in &mut adj {
            list.sort_by_key(|&(v, _)| v);
        }
        adj
    }

    /// Distances from `source` to every node (dense Dijkstra; `inf` when unreachable).
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        let adj = self.adjacency();
        let n = self.num_nodes();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[source] = 0.0;
        for _ in 0..n {
            let next = (0..n)
                .filter(|&v| !done[v] && dist[v].is_finite())
                .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
            let Some(u) = next else { break };
            done[u] = true;
            for &(v, w) in &adj[u] {
                let cand = dist[u] + w;
                if cand < dist[v] {
                    dist[v] = cand;
                }
            }
        }
        dist
    }

    /// Weighted shortest route from `requester` to `source`, returned in
    /// server-first order. Among equal-weight routes the one whose node
    /// sequence, read from the requester, is lexicographically smallest wins.
    pub fn shortest_path(&self, requester: usize, source: usize) -> Result<Vec<usize>> {
        let dist = self.distances_from(source);
        if !dist[requester].is_finite() {
            return Err(Error::Routing(format!(
                "node {requester} cannot reach source {source}"
            )));
        }
        let adj = self.adjacency();
        let mut route = vec![requester];
        let mut u = requester;
        while u != source {
            let tol = 1e-9 * dist[u].max(1.0);
            let next = adj[u]
                .iter()
                .filter(|&&(v, w)| (w + dist[v] - dist[u]).abs() <= tol && dist[v] < dist[u] + tol)
                .map(|&(v, _)| v)
                .find(|v| !route.contains(v))
                .ok_or_else(|| Error::Routing(format!("no shortest-path successor at node {u}")))?;
            route.push(next);
            u = next;
        }
        route.reverse();
        Ok(route)
    }

    pub fn path_weight(&self, nodes: &[usize]) -> f64 {
        let adj = self.adjacency();
        nodes
            .windows(2)
            .map(|w| {
                adj[w[0]]
                    .iter()
                    .find(|&&(v, _)| v == w[1])
                    .map(|&(_, wt)| wt)
                    .unwrap_or(f64::INFINITY)
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    /// Number of requesting nodes, drawn uniformly without replacement.
    pub requesters: usize,
    pub weight_min: f64,
    pub weight_max: f64,
    pub seed: u64,
    /// Explicit source node per content; drawn uniformly when absent.
    #[serde(default)]
    pub sources: Option<Vec<usize>>,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            requesters: 12,
            weight_min: 1.0,
            weight_max: 20.0,
            seed: 1,
            sources: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologyKind {
    Line {
        length: usize,
    },
    BinaryTree {
        depth: usize,
        /// Give every leaf path its own disjoint block of contents.
        #[serde(default)]
        disjoint_contents: bool,
    },
    Grid {
        side: usize,
        #[serde(flatten)]
        params: GridParams,
    },
}

/// Builds one of the reference topologies with a uniform capacity per node.
///
/// With `disjoint_contents` on a tree, `n_contents` is the catalog size per
/// leaf and the instance catalog holds `leaves * n_contents` contents.
pub fn build_topology(
    kind: &TopologyKind,
    n_contents: usize,
    capacity: f64,
) -> Result<NetworkSpec> {
    if n_contents == 0 {
        return Err(Error::InvalidCatalog(
            "catalog must hold at least one content".into(),
        ));
    }
    let all: Vec<usize> = (0..n_contents).collect();
    let spec = match kind {
        TopologyKind::Line { length } => {
            if *length == 0 {
                return Err(Error::Parameter("line length must be >= 1".into()));
            }
            let edges = (1..*length)
                .map(|v| Edge {
                    a: v - 1,
                    b: v,
                    weight: 1.0,
                })
                .collect();
            NetworkSpec {
                capacities: vec![capacity; *length],
                edges,
                paths: vec![PathSpec {
                    nodes: (0..*length).collect(),
                    contents: all,
                }],
            }
        }
        TopologyKind::BinaryTree {
            depth,
            disjoint_contents,
        } => build_tree(*depth, n_contents, capacity, *disjoint_contents)?,
        TopologyKind::Grid { side, params } => build_grid(*side, params, n_contents, capacity)?,
    };
    let total = match kind {
        TopologyKind::BinaryTree {
            depth,
            disjoint_contents: true,
        } => n_contents << (depth - 1),
        _ => n_contents,
    };
    spec.validate(total)?;
    Ok(spec)
}

/// Nodes are numbered level by level starting at the leaves, so for depth 3
/// leaves are `0..4`, their parents `4, 5` and the root `6`.
fn build_tree(
    depth: usize,
    n_contents: usize,
    capacity: f64,
    disjoint: bool,
) -> Result<NetworkSpec> {
    if depth == 0 || depth > 20 {
        return Err(Error::Parameter(format!(
            "tree depth must lie in 1..=20, got {depth}"
        )));
    }
    let nodes = (1usize << depth) - 1;
    let level_size = |k: usize| 1usize << (depth - 1 - k);
    let level_offset = |k: usize| (0..k).map(level_size).sum::<usize>();
    let parent = |k: usize, j: usize| level_offset(k + 1) + j / 2;

    let mut edges = Vec::new();
    for k in 0..depth - 1 {
        for j in 0..level_size(k) {
            edges.push(Edge {
                a: level_offset(k) + j,
                b: parent(k, j),
                weight: 1.0,
            });
        }
    }
    let leaves = level_size(0);
    let mut paths = Vec::with_capacity(leaves);
    for leaf in 0..leaves {
        let mut route = vec![leaf];
        let mut j = leaf;
        for k in 0..depth - 1 {
            let p = parent(k, j);
            route.push(p);
            j = p - level_offset(k + 1);
        }
        route.reverse();
        let contents = if disjoint {
            (leaf * n_contents..(leaf + 1) * n_contents).collect()
        } else {
            (0..n_contents).collect()
        };
        paths.push(PathSpec {
            nodes: route,
            contents,
        });
    }
    Ok(NetworkSpec {
        capacities: vec![capacity; nodes],
        edges,
        paths,
    })
}

fn build_grid(
    side: usize,
    params: &GridParams,
    n_contents: usize,
    capacity: f64,
) -> Result<NetworkSpec> {
    if side < 2 {
        return Err(Error::Parameter("grid side must be >= 2".into()));
    }
    let nodes = side * side;
    if params.requesters == 0 || params.requesters > nodes {
        return Err(Error::Parameter(format!(
            "grid requester count must lie in 1..={nodes}, got {}",
            params.requesters
        )));
    }
    if !(params.weight_min >= 0.0 && params.weight_max >= params.weight_min) {
        return Err(Error::Parameter("grid weight interval is invalid".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut edges = Vec::new();
    for r in 0..side {
        for c in 0..side {
            let v = r * side + c;
            if c + 1 < side {
                edges.push(Edge {
                    a: v,
                    b: v + 1,
                    weight: draw_weight(&mut rng, params),
                });
            }
            if r + 1 < side {
                edges.push(Edge {
                    a: v,
                    b: v + side,
                    weight: draw_weight(&mut rng, params),
                });
            }
        }
    }
    let mut requesters = sample(&mut rng, nodes, params.requesters).into_vec();
    requesters.sort_unstable();
    let sources = match &params.sources {
        Some(s) => {
            if s.len() != n_contents || s.iter().any(|&v| v >= nodes) {
                return Err(Error::Config(
                    "grid sources must name one valid node per content".into(),
                ));
            }
            s.clone()
        }
        None => (0..n_contents)
            .map(|_| rng.random_range(0..nodes))
            .collect(),
    };

    let mut spec = NetworkSpec {
        capacities: vec![capacity; nodes],
        edges,
        paths: Vec::new(),
    };
    for &v in &requesters {
        for s in 0..nodes {
            let contents: Vec<usize> = (0..n_contents).filter(|&i| sources[i] == s).collect();
            if contents.is_empty() {
                continue;
            }
            let route = spec.shortest_path(v, s)?;
            spec.paths.push(PathSpec {
                nodes: route,
                contents,
            });
        }
    }
    Ok(spec)
}

fn draw_weight(rng: &mut ChaCha8Rng, params: &GridParams) -> f64 {
    if params.weight_max > params.weight_min {
        rng.random_range(params.weight_min..params.weight_max)
    } else {
        params.weight_min
    }
}
