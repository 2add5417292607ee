//! Experiment orchestration: config files, the end-to-end pipeline and
//! reports built from persisted traces.

mod pipeline;
mod report;
mod spec;

pub use pipeline::{
    estimate_case, identify_tunnel, reproduce, simulate_experiment, ExperimentRuns, Reproduction, FIRE_NODE, MHE_TRACE,
    OPEN_LOOP_TRACE,
};
pub use report::{
    evaluate_trace, load_case, save_evaluation, write_report, CaseSummary, Evaluation, LoadedCase, Report,
};
pub use spec::{ExperimentSpec, PlotSelection, SensorCase};
