use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tunnel_rom::dataio::{concatenate_runs, load_run, save_run, SensorLayout};
use tunnel_rom::harness::{
    estimate_case, evaluate_trace, identify_tunnel, load_case, reproduce, save_evaluation, write_report,
    ExperimentSpec, PlotSelection, FIRE_NODE,
};
use tunnel_rom::mhe::{load_trace, standard_cases, MheConfig, ObservabilityGate};
use tunnel_rom::rom::{AssemblyOptions, TunnelModel};
use tunnel_rom::simkit::{simulate_ground_truth, SimConfig};
use tunnel_rom::sysid::{IdentificationConfig, ModelFile};
use tunnel_rom::Error;

#[derive(Parser)]
#[command(
    name = "tunnel-rom",
    version,
    about = "Tunnel fire reduced-order models and moving horizon estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one fire scenario and write the run as CSV.
    Simulate(SimulateArgs),
    /// Identify node models from training runs and write a model file.
    Identify(IdentifyArgs),
    /// Run the estimator and the open-loop baseline on a run.
    Estimate(EstimateArgs),
    /// Per-node RMSE of one trace against the ground-truth run.
    Evaluate(EvaluateArgs),
    /// Summary tables and plot data from case directories.
    Report(ReportArgs),
    /// Run the full experiment matrix end to end.
    ReproducePaper(ReproduceArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation config file (TOML, flat keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Battery capacity, Ah; scales the peak heat release rate.
    #[arg(long)]
    capacity: Option<f64>,
    /// Ambient temperature, deg C.
    #[arg(long)]
    ambient: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Training run CSVs; concatenated in the order given.
    #[arg(long = "train", required = true)]
    train: Vec<PathBuf>,
    /// Identification config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    hankel_rows: Option<usize>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseSet {
    /// Sensors at {1,5}, {5}, {5,10} and {1,5,10}.
    Paper,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Run CSV giving the inputs, the sensor readings and the ground truth.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated sensor nodes, e.g. `1,5,10`.
    #[arg(long, required_unless_present = "cases", conflicts_with = "cases")]
    sensors: Option<String>,
    /// Run a predefined set of sensor cases, one subdirectory each.
    #[arg(long, value_enum)]
    cases: Option<CaseSet>,
    /// Horizon length in steps.
    #[arg(long)]
    window: Option<usize>,
    /// Estimator config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    /// Also write the table as CSV.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    truth: PathBuf,
    /// Case directories written by `estimate`.
    cases: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 6, 8])]
    thermal_nodes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 7, 9])]
    smoke_nodes: Vec<usize>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Experiment config file (TOML); defaults run the standard experiment matrix.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `output_dir` from the config.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> tunnel_rom::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn simulate(a: SimulateArgs) -> tunnel_rom::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    if a.capacity.is_some() || a.ambient.is_some() {
        cfg = cfg.with_scenario(
            a.capacity.unwrap_or(cfg.hrr.capacity),
            a.ambient.unwrap_or(cfg.ambient_temperature),
        );
    }
    if let Some(s) = a.seed {
        cfg.rng_seed = s;
    }
    let run = simulate_ground_truth(&cfg)?;
    save_run(&run, &a.out)?;
    println!(
        "wrote {} samples x {} nodes to {}",
        run.len(),
        run.node_count(),
        a.out.display()
    );
    Ok(())
}

fn identify(a: IdentifyArgs) -> tunnel_rom::Result<()> {
    let mut cfg: IdentificationConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => IdentificationConfig::default(),
    };
    if let Some(o) = a.order {
        cfg.order = o;
    }
    if let Some(r) = a.hankel_rows {
        cfg.hankel_rows = r;
    }
    cfg.validate()?;
    let runs = a
        .train
        .iter()
        .map(|p| load_run(p))
        .collect::<tunnel_rom::Result<Vec<_>>>()?;
    let train = concatenate_runs(&runs)?;
    let n = train.node_count();
    let model = identify_tunnel(&train, &cfg, &[FIRE_NODE], &SensorLayout::full(n))?;
    model.to_model_file(cfg).save(&a.out)?;
    println!("wrote {} node models to {}", 2 * n, a.out.display());
    Ok(())
}

fn estimate(a: EstimateArgs) -> tunnel_rom::Result<()> {
    let mut cfg: MheConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => MheConfig::default(),
    };
    if let Some(w) = a.window {
        cfg.horizon = w;
    }
    cfg.validate()?;
    let file = ModelFile::load(&a.model)?;
    let run = load_run(&a.data)?;
    let n = file.node_count;
    let model = TunnelModel::from_model_file(&file, &SensorLayout::full(n), &AssemblyOptions::default())?;
    let cases = match (&a.sensors, a.cases) {
        (Some(s), _) => {
            let layout = SensorLayout::parse(s, n).map_err(|e| Error::Config(format!("--sensors: {e}")))?;
            vec![(None, layout)]
        }
        (None, Some(CaseSet::Paper)) => {
            cfg.observability = ObservabilityGate::Partial;
            standard_cases(n)?
                .into_iter()
                .map(|(name, l)| (Some(name), l))
                .collect()
        }
        (None, None) => unreachable!("clap requires --sensors or --cases"),
    };
    for (name, layout) in &cases {
        let dir = name.as_ref().map_or_else(|| a.out.clone(), |n| a.out.join(n));
        let rep = estimate_case(&model, &run, layout, &cfg, &dir)?;
        println!(
            "{}sensors {}: mean temperature RMSE open-loop {:.4} mhe {:.4}; mean smoke RMSE open-loop {:.4e} mhe {:.4e}",
            name.as_ref().map_or_else(String::new, |n| format!("{n} ")),
            layout,
            rep.open_loop_rmse.mean_temperature(),
            rep.mhe_rmse.mean_temperature(),
            rep.open_loop_rmse.mean_smoke(),
            rep.mhe_rmse.mean_smoke()
        );
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> tunnel_rom::Result<()> {
    let truth = load_run(&a.truth)?;
    let trace = load_trace(&a.trace)?;
    let ev = evaluate_trace(&truth, &trace)?;
    println!("node  temperature_rmse  temperature_range  smoke_rmse  smoke_range");
    for i in 0..ev.rmse.temperature.len() {
        println!(
            "{:>4}  {:>16.6e}  {:>17.6e}  {:>10.4e}  {:>11.4e}",
            i + 1,
            ev.rmse.temperature[i],
            ev.temperature_range[i],
            ev.rmse.smoke[i],
            ev.smoke_range[i]
        );
    }
    if let Some(out) = &a.out {
        save_evaluation(out, &ev)?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> tunnel_rom::Result<()> {
    if a.cases.is_empty() {
        return Err(Error::InvalidArgument(
            "report needs at least one case directory".into(),
        ));
    }
    let truth = load_run(&a.truth)?;
    let cases = a
        .cases
        .iter()
        .map(|d| load_case(d))
        .collect::<tunnel_rom::Result<Vec<_>>>()?;
    let plots = PlotSelection {
        thermal_nodes: a.thermal_nodes,
        smoke_nodes: a.smoke_nodes,
    };
    let r = write_report(&truth, &cases, &a.out, &plots)?;
    println!("reported {} cases in {}", r.cases.len(), a.out.display());
    Ok(())
}

fn reproduce_paper(a: ReproduceArgs) -> tunnel_rom::Result<()> {
    let spec = match &a.config {
        Some(p) => ExperimentSpec::load(p)?,
        None => ExperimentSpec::default(),
    };
    let r = reproduce(&spec, a.out.as_deref())?;
    for c in &r.report.cases {
        println!(
            "{} (sensors {}): mean temperature RMSE open-loop {:.4} mhe {:.4}",
            c.name,
            c.sensors,
            c.open_loop.rmse.mean_temperature(),
            c.mhe.rmse.mean_temperature()
        );
    }
    println!("results in {}", r.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Identify(a) => identify(a),
        Command::Estimate(a) => estimate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
        Command::ReproducePaper(a) => reproduce_paper(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
