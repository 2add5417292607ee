//! Ground-truth generator. A 1-D advection-diffusion-source model of tunnel
//! temperature and smoke density stands in for a full CFD run; probes at the
//! node positions are sampled once per `sample_time`.

mod config;
mod hrr;
mod protocol;
mod transport;

pub use config::{HrrFluctuation, SimConfig, SimConfigFile, TransportCoefficients, TunnelGeometry};
pub use hrr::{characteristic_fire_diameter, hrr_at, HrrProfile, AIR_SPECIFIC_HEAT, GRAVITY};
pub(crate) use protocol::derive_seed;
pub use protocol::{generate_protocol_runs, run_scenarios, ProtocolRuns, Scenario, ScenarioRole};
pub use transport::{simulate_ground_truth, HrrDrive, TransportSolver};

pub use crate::dataio::TimeSeriesRun;
