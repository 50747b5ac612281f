//! Content catalog, topology, workload and utility families shared by every
//! other module.

mod instance;
mod topology;
mod utility;
mod zipf;

pub use instance::{ContentCatalog, Instance, Popularity, RequestClass, WeightRule, Workload};
pub use topology::{build_topology, Edge, GridParams, NetworkSpec, PathSpec, TopologyKind};
pub use utility::{UtilitySpec, DEFAULT_H_MIN};
pub use zipf::zipf_popularity;
