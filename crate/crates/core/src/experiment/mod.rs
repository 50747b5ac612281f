//! Config-driven experiments and their tabular outputs.

mod commands;
mod config;
mod output;
mod reproduce;

pub use commands::{
    analyze, compare, compare_runs, field_table, max_abs_diff, online, optimum, primal_dual,
    simulate, simulate_timers, solve_cmd, timers_for, Comparison, Optimum,
};
pub use config::{
    has_shared_contents, AnalyzeConfig, Capacities, ExperimentConfig, FieldInput, NetworkConfig,
    SolverConfig,
};
pub use output::{write_bundle, Bundle, Cell, Format, Header, Table};
pub use reproduce::{preset, reproduce, FIGURES, GRID_SEEDS};

impl ExperimentConfig {
    /// Provenance of the outputs produced from this config.
    pub fn header(&self) -> Header {
        Header {
            config_hash: self.hash(),
            seed: self.effective_seed(),
        }
    }
}
