use serde::{Deserialize, Serialize};

use super::topology::{NetworkSpec, PathSpec};
use super::utility::UtilitySpec;
use super::zipf::zipf_popularity;
use crate::error::{Error, Result};

/// Per-content weights and arrival rates for a single request stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentCatalog {
    pub weights: Vec<f64>,
    pub rates: Vec<f64>,
}

impl ContentCatalog {
    pub fn new(weights: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        let c = Self { weights, rates };
        c.validate()?;
        Ok(c)
    }

    /// Zipf rates `Lambda * rho_i` with weights equal to the rates.
    pub fn zipf(n: usize, alpha: f64, total_rate: f64) -> Result<Self> {
        let rates: Vec<f64> = zipf_popularity(n, alpha)?
            .into_iter()
            .map(|r| r * total_rate)
            .collect();
        Self::new(rates.clone(), rates)
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn popularity(&self) -> Vec<f64> {
        let total = self.total_rate();
        self.rates.iter().map(|r| r / total).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(Error::InvalidCatalog(
                "catalog must hold at least one content".into(),
            ));
        }
        if self.weights.len() != self.rates.len() {
            return Err(Error::InvalidCatalog(
                "weights and rates differ in length".into(),
            ));
        }
        if self.weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidCatalog("weights must be positive".into()));
        }
        if self.rates.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidCatalog(
                "arrival rates must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// How request rates are assigned. Contents requested by one requester are
/// ranked by ascending content id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Popularity {
    Zipf {
        alpha: f64,
    },
    /// One Zipf exponent per requester, in order of first appearance.
    ZipfPerRequester {
        alphas: Vec<f64>,
    },
    /// Explicit popularity per content id, rescaled per requester.
    Explicit {
        weights: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    pub popularity: Popularity,
    /// Aggregate request rate of each requester.
    #[serde(default = "unit_rate")]
    pub total_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn unit_rate() -> f64 {
    1.0
}

impl Workload {
    pub fn zipf(alpha: f64) -> Self {
        Self {
            popularity: Popularity::Zipf { alpha },
            total_rate: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightRule {
    /// `w = lambda` for each class.
    #[default]
    Rate,
    Uniform {
        value: f64,
    },
    /// One weight per content id.
    PerContent {
        weights: Vec<f64>,
    },
}

/// One (content, path) request stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestClass {
    pub content: usize,
    pub path: usize,
    pub rate: f64,
    pub weight: f64,
}

/// A fully specified problem: network, request classes and utility.
#[derive(Debug, Clone)]
pub struct Instance {
    pub n_contents: usize,
    pub network: NetworkSpec,
    pub classes: Vec<RequestClass>,
    pub utility: UtilitySpec,
    /// For each node, the `(class, 0-based position)` slots it hosts.
    slots: Vec<Vec<(usize, usize)>>,
    offsets: Vec<usize>,
}

impl Instance {
    pub fn new(
        network: NetworkSpec,
        n_contents: usize,
        workload: &Workload,
        weights: &WeightRule,
        utility: UtilitySpec,
    ) -> Result<Self> {
        network.validate(n_contents)?;
        if !(workload.total_rate > 0.0) {
            return Err(Error::Parameter("aggregate rate must be positive".into()));
        }
        let mut requesters: Vec<usize> = Vec::new();
        for p in &network.paths {
            if !requesters.contains(&p.requester()) {
                requesters.push(p.requester());
            }
        }
        let mut classes = Vec::new();
        for (g, &r) in requesters.iter().enumerate() {
            let mut catalog: Vec<(usize, usize)> = network
                .paths
                .iter()
                .enumerate()
                .filter(|(_, p)| p.requester() == r)
                .flat_map(|(pi, p)| p.contents.iter().map(move |&i| (i, pi)))
                .collect();
            catalog.sort_unstable();
            if catalog.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Model(format!(
                    "requester {r} reaches one content over two paths"
                )));
            }
            let rho = match &workload.popularity {
                Popularity::Zipf { alpha } => zipf_popularity(catalog.len(), *alpha)?,
                Popularity::ZipfPerRequester { alphas } => {
                    let a = alphas.get(g).ok_or_else(|| {
                        Error::Config(format!("no Zipf exponent for requester group {g}"))
                    })?;
                    zipf_popularity(catalog.len(), *a)?
                }
                Popularity::Explicit { weights } => {
                    if weights.len() != n_contents || weights.iter().any(|&x| !(x > 0.0)) {
                        return Err(Error::InvalidCatalog(
                            "explicit popularity needs one positive entry per content".into(),
                        ));
                    }
                    let raw: Vec<f64> = catalog.iter().map(|&(i, _)| weights[i]).collect();
                    let s: f64 = raw.iter().sum();
                    raw.into_iter().map(|x| x / s).collect()
                }
            };
            for (&(content, path), rho) in catalog.iter().zip(rho) {
                let rate = workload.total_rate * rho;
                let weight = match weights {
                    WeightRule::Rate => rate,
                    WeightRule::Uniform { value } => *value,
                    WeightRule::PerContent { weights } => *weights
                        .get(content)
                        .ok_or_else(|| Error::Config(format!("no weight for content {content}")))?,
                };
                if !(weight > 0.0) {
                    return Err(Error::InvalidCatalog(format!(
                        "content {content} has weight {weight}"
                    )));
                }
                classes.push(RequestClass {
                    content,
                    path,
                    rate,
                    weight,
                });
            }
        }
        classes.sort_by_key(|c| (c.path, c.content));
        Self::from_classes(network, n_contents, classes, utility)
    }

    pub fn from_classes(
        network: NetworkSpec,
        n_contents: usize,
        classes: Vec<RequestClass>,
        utility: UtilitySpec,
    ) -> Result<Self> {
        network.validate(n_contents)?;
        utility.validate()?;
        let mut slots = vec![Vec::new(); network.num_nodes()];
        let mut offsets = Vec::with_capacity(classes.len() + 1);
        offsets.push(0);
        for (c, class) in classes.iter().enumerate() {
            let path = network.paths.get(class.path).ok_or_else(|| {
                Error::Model(format!("class {c} references missing path {}", class.path))
            })?;
            if class.content >= n_contents {
                return Err(Error::InvalidCatalog(format!(
                    "class {c} requests content {}",
                    class.content
                )));
            }
            if !(class.rate >= 0.0) || !(class.weight > 0.0) {
                return Err(Error::InvalidCatalog(format!(
                    "class {c} needs a non-negative rate and positive weight"
                )));
            }
            for (pos, &v) in path.nodes.iter().enumerate() {
                slots[v].push((c, pos));
            }
            offsets.push(offsets[c] + path.len());
        }
        Ok(Self {
            n_contents,
            network,
            classes,
            utility,
            slots,
            offsets,
        })
    }

    /// A single path of `capacities.len()` caches serving `catalog`.
    pub fn line(
        catalog: &ContentCatalog,
        capacities: Vec<f64>,
        utility: UtilitySpec,
    ) -> Result<Self> {
        catalog.validate()?;
        let len = capacities.len();
        if len == 0 {
            return Err(Error::Parameter("line needs at least one cache".into()));
        }
        let network = NetworkSpec {
            capacities,
            edges: (1..len)
                .map(|v| super::Edge {
                    a: v - 1,
                    b: v,
                    weight: 1.0,
                })
                .collect(),
            paths: vec![PathSpec {
                nodes: (0..len).collect(),
                contents: (0..catalog.len()).collect(),
            }],
        };
        let classes = (0..catalog.len())
            .map(|i| RequestClass {
                content: i,
                path: 0,
                rate: catalog.rates[i],
                weight: catalog.weights[i],
            })
            .collect();
        Self::from_classes(network, catalog.len(), classes, utility)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.network.num_nodes()
    }

    pub fn path(&self, class: usize) -> &PathSpec {
        &self.network.paths[self.classes[class].path]
    }

    pub fn path_len(&self, class: usize) -> usize {
        self.path(class).len()
    }

    pub fn capacity(&self, node: usize) -> f64 {
        self.network.capacities[node]
    }

    /// `(class, 0-based position)` pairs stored at `node`.
    pub fn slots(&self, node: usize) -> &[(usize, usize)] {
        &self.slots[node]
    }

    /// Offset of a class in the flattened hit vector.
    pub fn offset(&self, class: usize) -> usize {
        self.offsets[class]
    }

    pub fn num_vars(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Discount for a hit at 0-based `pos` of `class`'s path.
    pub fn discount(&self, class: usize, pos: usize) -> f64 {
        self.utility.discount(pos + 1, self.path_len(class))
    }

    pub fn total_rate(&self) -> f64 {
        self.classes.iter().map(|c| c.rate).sum()
    }

    /// Splits a flat vector into one row per class.
    pub fn unflatten(&self, flat: &[f64]) -> Vec<Vec<f64>> {
        (0..self.num_classes())
            .map(|c| flat[self.offsets[c]..self.offsets[c + 1]].to_vec())
            .collect()
    }

    pub fn flatten(&self, field: &[Vec<f64>]) -> Vec<f64> {
        field.iter().flatten().copied().collect()
    }

    /// Distinct classes sharing content `i` (used when copies are shared).
    pub fn classes_of_content(&self, content: usize) -> Vec<usize> {
        (0..self.num_classes())
            .filter(|&c| self.classes[c].content == content)
            .collect()
    }
}
