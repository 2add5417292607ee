//! Per-node state-space identification from input/output records.

mod file;
mod hankel;
mod node;
mod state_space;
mod subspace;

pub(crate) use file::{matrix, rows};
pub use file::{CompactModelRecord, ModelFile, NodeModelRecord, MODEL_FILE_FORMAT};
pub use hankel::build_block_hankel;
pub use node::{identify_node, rmse, simulate_node, validate_node, NodeModel, NodeValidation};
pub use state_space::{Conversion, StateSpace};
pub use subspace::{subspace_identify, subspace_identify_discrete, DiscreteQuadruple, IdentificationConfig};
