//! Time-series runs, their CSV form, and the per-node channel wiring used by
//! identification and estimation.

mod channels;
mod run;

pub use channels::{extract_node_io, Channel, ModelKind, NodeChannelSpec, NodeIo, SensorLayout};
pub use run::{concatenate_runs, load_run, save_run, RunMetadata, TimeSeriesRun};
