//! Compact tunnel-wide models assembled from node cascades.

mod cascade;
mod discrete;
mod open_loop;

pub use cascade::{assemble_cascade, chain_inputs, AssemblyOptions, CompactModel, TunnelModel};
pub use discrete::{
    discretize, observability_check, observability_check_with, observability_matrix, DiscreteModel,
    ObservabilityReport, OBSERVABILITY_TOLERANCE,
};
pub(crate) use open_loop::check_sample_time;
pub use open_loop::{open_loop_simulate, open_loop_simulate_from, sequential_rollout, DIVERGENCE_GUARD};
