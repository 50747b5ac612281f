//! Timer-based cache network analysis and optimization.
//!
//! The crate covers the stationary analysis of TTL caches under the MCDP and
//! MCD replication policies, the cost model, centralized convex solvers, an
//! online primal controller, a distributed primal-dual algorithm and a
//! discrete-event simulator with classical eviction baselines.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cost;
pub mod error;
pub mod experiment;
pub mod model;
pub mod online;
pub mod primal_dual;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
