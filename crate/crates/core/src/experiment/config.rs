use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{Policy, FEASIBILITY_SLACK};
use crate::cost::CostSpec;
use crate::error::{Error, Result};
use crate::model::{
    build_topology, Edge, GridParams, Instance, NetworkSpec, PathSpec, TopologyKind, UtilitySpec,
    WeightRule, Workload,
};
use crate::online::OnlineOptions;
use crate::primal_dual::PrimalDualOptions;
use crate::sim::{Eviction, SimOptions};
use crate::solver::{SpgOptions, Variant};

/// One experiment: instance, algorithm settings and output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_scenario")]
    pub scenario: String,
    pub network: NetworkConfig,
    /// Catalog size; per leaf for trees with disjoint contents.
    #[serde(default = "default_contents")]
    pub contents: usize,
    #[serde(default = "default_workload")]
    pub workload: Workload,
    #[serde(default)]
    pub weights: WeightRule,
    #[serde(default)]
    pub utility: UtilitySpec,
    #[serde(default = "default_policy")]
    pub policy: Policy,
    #[serde(default)]
    pub cost: CostSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub online: OnlineOptions,
    #[serde(default)]
    pub primal_dual: PrimalDualOptions,
    #[serde(default = "default_simulation")]
    pub simulation: SimOptions,
    /// Simulate this eviction baseline instead of TTL caching.
    #[serde(default)]
    pub eviction: Option<Eviction>,
    /// Baselines run by `compare`.
    #[serde(default = "default_baselines")]
    pub baselines: Vec<Eviction>,
    /// Share one physical copy per node among paths; detected from the
    /// instance when absent.
    #[serde(default)]
    pub shared: Option<bool>,
    #[serde(default)]
    pub analyze: AnalyzeConfig,
    /// Overrides the simulation and online seeds.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_scenario() -> String {
    "custom".into()
}
fn default_contents() -> usize {
    100
}
fn default_workload() -> Workload {
    Workload::zipf(0.8)
}
fn default_policy() -> Policy {
    Policy::Mcdp
}
fn default_simulation() -> SimOptions {
    SimOptions {
        replications: 5,
        ..SimOptions::default()
    }
}
fn default_baselines() -> Vec<Eviction> {
    Eviction::ALL.to_vec()
}

/// Node capacities: one value for every node or one per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Capacities {
    Uniform(f64),
    PerNode(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NetworkConfig {
    Line {
        length: usize,
        capacity: Capacities,
    },
    BinaryTree {
        depth: usize,
        capacity: Capacities,
        #[serde(default)]
        disjoint_contents: bool,
    },
    Grid {
        side: usize,
        capacity: Capacities,
        #[serde(default = "default_requesters")]
        requesters: usize,
        #[serde(default = "default_weight_min")]
        weight_min: f64,
        #[serde(default = "default_weight_max")]
        weight_max: f64,
        #[serde(default = "default_grid_seed")]
        seed: u64,
        #[serde(default)]
        sources: Option<Vec<usize>>,
    },
    Explicit {
        capacities: Vec<f64>,
        #[serde(default)]
        edges: Vec<Edge>,
        paths: Vec<PathSpec>,
    },
}

fn default_requesters() -> usize {
    12
}
fn default_weight_min() -> f64 {
    1.0
}
fn default_weight_max() -> f64 {
    20.0
}
fn default_grid_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Program to solve; chosen from the policy and topology when absent.
    #[serde(default)]
    pub variant: Option<Variant>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    100_000
}
fn default_slack() -> f64 {
    FEASIBILITY_SLACK
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: None,
            tol: default_tol(),
            max_iter: default_max_iter(),
            slack: default_slack(),
        }
    }
}

impl SolverConfig {
    pub fn spg(&self) -> SpgOptions {
        SpgOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..SpgOptions::default()
        }
    }
}

/// A timer or hit field: one value everywhere, one value per path position,
/// or one row per request class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldInput {
    Uniform(f64),
    PerPosition(Vec<f64>),
    PerClass(Vec<Vec<f64>>),
}

impl FieldInput {
    pub fn expand(&self, inst: &Instance) -> Result<Vec<Vec<f64>>> {
        let rows: Vec<Vec<f64>> = match self {
            FieldInput::Uniform(x) => (0..inst.num_classes())
                .map(|c| vec![*x; inst.path_len(c)])
                .collect(),
            FieldInput::PerPosition(v) => (0..inst.num_classes()).map(|_| v.clone()).collect(),
            FieldInput::PerClass(rows) => rows.clone(),
        };
        if rows.len() != inst.num_classes() {
            return Err(Error::Config(format!(
                "field has {} rows for {} classes",
                rows.len(),
                inst.num_classes()
            )));
        }
        for (c, r) in rows.iter().enumerate() {
            if r.len() != inst.path_len(c) {
                return Err(Error::Config(format!(
                    "class {c}: {} values for a path of {}",
                    r.len(),
                    inst.path_len(c)
                )));
            }
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    #[serde(default)]
    pub timers: Option<FieldInput>,
    #[serde(default)]
    pub hits: Option<FieldInput>,
    /// Map the result back and report the largest roundtrip error.
    #[serde(default)]
    pub roundtrip: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Seed used by the randomized parts of the run.
    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(self.simulation.seed)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.apply_seed();
    }

    pub fn set_horizon(&mut self, requests: u64) {
        self.simulation.requests = requests;
        self.online.requests = requests as usize;
    }

    fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            self.simulation.seed = s;
            self.online.seed = s;
        }
    }

    /// Number of contents in the instance catalog.
    pub fn catalog_size(&self) -> usize {
        match &self.network {
            NetworkConfig::BinaryTree {
                depth,
                disjoint_contents: true,
                ..
            } if *depth >= 1 => self.contents << (depth - 1),
            _ => self.contents,
        }
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        let (kind, caps) = match &self.network {
            NetworkConfig::Line { length, capacity } => {
                (TopologyKind::Line { length: *length }, capacity)
            }
            NetworkConfig::BinaryTree {
                depth,
                capacity,
                disjoint_contents,
            } => (
                TopologyKind::BinaryTree {
                    depth: *depth,
                    disjoint_contents: *disjoint_contents,
                },
                capacity,
            ),
            NetworkConfig::Grid {
                side,
                capacity,
                requesters,
                weight_min,
                weight_max,
                seed,
                sources,
            } => (
                TopologyKind::Grid {
                    side: *side,
                    params: GridParams {
                        requesters: *requesters,
                        weight_min: *weight_min,
                        weight_max: *weight_max,
                        seed: *seed,
                        sources: sources.clone(),
                    },
                },
                capacity,
            ),
            NetworkConfig::Explicit {
                capacities,
                edges,
                paths,
            } => {
                let spec = NetworkSpec {
                    capacities: capacities.clone(),
                    edges: edges.clone(),
                    paths: paths.clone(),
                };
                spec.validate(self.contents)?;
                return Ok(spec);
            }
        };
        let uniform = match caps {
            Capacities::Uniform(b) => *b,
            Capacities::PerNode(_) => 0.0,
        };
        let mut spec = build_topology(&kind, self.contents, uniform)?;
        if let Capacities::PerNode(b) = caps {
            if b.len() != spec.capacities.len() {
                return Err(Error::Config(format!(
                    "{} capacities for {} nodes",
                    b.len(),
                    spec.capacities.len()
                )));
            }
            spec.capacities = b.clone();
            spec.validate(self.catalog_size())?;
        }
        Ok(spec)
    }

    /// Builds and validates the instance and the algorithm settings.
    pub fn instance(&self) -> Result<Instance> {
        self.online.penalty.validate()?;
        self.cost.validate()?;
        Instance::new(
            self.network_spec()?,
            self.catalog_size(),
            &self.workload,
            &self.weights,
            self.utility,
        )
    }

    /// Whether copies are shared between paths for this instance.
    pub fn is_shared(&self, inst: &Instance) -> bool {
        self.shared.unwrap_or_else(|| has_shared_contents(inst))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Whether two classes request the same content through a common node.
pub fn has_shared_contents(inst: &Instance) -> bool {
    (0..inst.num_nodes()).any(|v| {
        let slots = inst.slots(v);
        slots.iter().enumerate().any(|(k, &(c, _))| {
            slots[k + 1..]
                .iter()
                .any(|&(d, _)| inst.classes[c].content == inst.classes[d].content)
        })
    })
}
