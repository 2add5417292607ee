use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::report::{load_case, write_report, Report};
use super::spec::ExperimentSpec;
use crate::dataio::{concatenate_runs, save_run, ModelKind, NodeChannelSpec, SensorLayout, TimeSeriesRun};
use crate::mhe::{run_offline, save_rmse_table, save_trace, MheConfig, ObservabilityGate, OfflineReport};
use crate::rom::{AssemblyOptions, TunnelModel};
use crate::simkit::{run_scenarios, ScenarioRole, SimConfig};
use crate::sysid::{identify_node, IdentificationConfig, NodeModel};
use crate::{Error, Result};

pub const MHE_TRACE: &str = "trace_mhe.csv";
pub const OPEN_LOOP_TRACE: &str = "trace_open_loop.csv";

/// Fire node of the default tunnel layout.
pub const FIRE_NODE: usize = 1;

#[derive(Debug, Clone)]
pub struct ExperimentRuns {
    pub train: Vec<TimeSeriesRun>,
    pub validation: TimeSeriesRun,
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Simulate every scenario of the experiment.
pub fn simulate_experiment(spec: &ExperimentSpec) -> Result<ExperimentRuns> {
    let base: SimConfig = spec.sim_config()?;
    let mut train = Vec::new();
    let mut validation = None;
    for (sc, run) in run_scenarios(&base, &spec.scenarios)? {
        match sc.role {
            ScenarioRole::Train => train.push(run),
            ScenarioRole::Validation => validation = Some(run),
        }
    }
    let validation = validation.ok_or_else(|| Error::Config("no validation scenario".into()))?;
    Ok(ExperimentRuns { train, validation })
}

/// Identify the thermal and smoke model of every node from one (possibly
/// concatenated) training run and assemble both chains.
pub fn identify_tunnel(
    train: &TimeSeriesRun,
    cfg: &IdentificationConfig,
    fire_nodes: &[usize],
    layout: &SensorLayout,
) -> Result<TunnelModel<f64>> {
    let n = train.node_count();
    let jobs: Vec<(ModelKind, usize)> = [ModelKind::Thermal, ModelKind::Smoke]
        .into_iter()
        .flat_map(|k| (1..=n).map(move |i| (k, i)))
        .collect();
    let models: Vec<NodeModel<f64>> = jobs
        .par_iter()
        .map(|&(kind, i)| {
            let spec = NodeChannelSpec::new(i, kind, fire_nodes.contains(&i))?;
            identify_node(train, &spec, cfg).map_err(|e| match e {
                Error::Identification(m) => Error::Identification(format!("{kind} node {i}: {m}")),
                e => e,
            })
        })
        .collect::<Result<_>>()?;
    let (thermal, smoke): (Vec<_>, Vec<_>) = models.into_iter().partition(|m| m.kind() == ModelKind::Thermal);
    TunnelModel::assemble(thermal, smoke, layout, &AssemblyOptions::default())
}

/// Run the estimator and the open-loop baseline for one layout and write
/// both traces and the per-node RMSE tables into `dir`.
pub fn estimate_case(
    model: &TunnelModel<f64>,
    run: &TimeSeriesRun,
    layout: &SensorLayout,
    cfg: &MheConfig,
    dir: &Path,
) -> Result<OfflineReport> {
    let report = run_offline(model, run, layout, cfg)?;
    create_dir(dir)?;
    save_trace(&report.mhe, &dir.join(MHE_TRACE))?;
    save_trace(&report.open_loop, &dir.join(OPEN_LOOP_TRACE))?;
    save_rmse_table(
        &dir.join("rmse_temperature.csv"),
        &report.open_loop_rmse.temperature,
        &report.mhe_rmse.temperature,
    )?;
    save_rmse_table(
        &dir.join("rmse_smoke.csv"),
        &report.open_loop_rmse.smoke,
        &report.mhe_rmse.smoke,
    )?;
    Ok(report)
}

/// Paths written by [`reproduce`].
#[derive(Debug, Clone)]
pub struct Reproduction {
    pub output_dir: PathBuf,
    pub validation_run: PathBuf,
    pub model_file: PathBuf,
    pub case_dirs: Vec<PathBuf>,
    pub report: Report,
}

/// The whole experiment matrix: simulate the scenarios, identify on the
/// concatenated training runs, estimate every sensor case on the validation
/// run, then build the report from the persisted files only.
pub fn reproduce(spec: &ExperimentSpec, output_dir: Option<&Path>) -> Result<Reproduction> {
    spec.validate()?;
    let out = output_dir.map_or_else(|| spec.output_dir.clone(), Path::to_path_buf);
    let runs_dir = out.join("runs");
    create_dir(&runs_dir)?;
    let runs = simulate_experiment(spec)?;
    for (i, run) in runs.train.iter().enumerate() {
        save_run(run, &runs_dir.join(format!("train_{}.csv", i + 1)))?;
    }
    let validation_run = runs_dir.join("validation.csv");
    save_run(&runs.validation, &validation_run)?;

    let train = concatenate_runs(&runs.train)?;
    let n = train.node_count();
    let cases = spec.layouts(n)?;
    let model = identify_tunnel(&train, &spec.identification, &[FIRE_NODE], &SensorLayout::full(n))?;
    let model_file = out.join("model.json");
    model.to_model_file(spec.identification).save(&model_file)?;

    let mut cfg = spec.mhe_config();
    // partial layouts are part of the study; only a blind layout is refused
    cfg.observability = ObservabilityGate::Partial;
    let case_root = out.join("cases");
    let case_dirs: Vec<PathBuf> = cases.iter().map(|(name, _)| case_root.join(name)).collect();
    cases
        .par_iter()
        .zip(&case_dirs)
        .map(|((_, layout), dir)| estimate_case(&model, &runs.validation, layout, &cfg, dir).map(|_| ()))
        .collect::<Result<Vec<()>>>()?;

    let truth = crate::dataio::load_run(&validation_run)?;
    let loaded = case_dirs.iter().map(|d| load_case(d)).collect::<Result<Vec<_>>>()?;
    let report = write_report(&truth, &loaded, &out.join("report"), &spec.plots)?;
    std::fs::write(
        out.join("experiment.toml"),
        toml::to_string(spec).map_err(|e| Error::Config(format!("experiment config: {e}")))?,
    )
    .map_err(|e| Error::io(out.join("experiment.toml"), e))?;
    Ok(Reproduction {
        output_dir: out,
        validation_run,
        model_file,
        case_dirs,
        report,
    })
}
