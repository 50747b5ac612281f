//! Stationary analysis of a single path under MCDP and MCD.

mod chain;
mod hits;

pub use chain::{mcd_chain, mcd_transition, mcdp_chain, mcdp_transition, EmbeddedChain, Policy};
pub use hits::{
    check_feasible, hits_from_timers, mcd_hits_from_timers, mcd_timers_from_hits,
    mcdp_hits_from_timers, mcdp_timers_from_hits, timers_from_hits,
};

/// Slack kept between iterates and the boundary of the feasible hit region.
pub const FEASIBILITY_SLACK: f64 = 1e-9;
