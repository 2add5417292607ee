//! Moving horizon estimation.

mod config;
mod estimator;
mod horizon;
mod offline;
mod trace;

pub use config::{
    effective_horizon, ChainWeights, MheConfig, ObservabilityGate, OutputBounds, SensorNoise, Weight, WeightRule,
    AUTO_NOISE_FLOOR,
};
pub use estimator::{MheEstimator, ResolvedWeights, StepEstimate};
pub use horizon::{
    solve_horizon, HorizonBuffer, HorizonSolution, HorizonSolver, HorizonWeights, OutputConstraints, SolverSettings,
};
pub use offline::{
    auto_sigma, estimate_run, robustness_sweep, run_offline, sensor_readings, standard_cases, CaseResult, Measurements,
    OfflineReport,
};
pub use trace::{dynamic_range, load_trace, save_rmse_table, save_trace, EstimateTrace, StepDiagnostics, TraceRmse};
