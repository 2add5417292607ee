use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::pipeline::{create_dir, MHE_TRACE, OPEN_LOOP_TRACE};
use super::spec::PlotSelection;
use crate::dataio::TimeSeriesRun;
use crate::mhe::{dynamic_range, load_trace, save_rmse_table, EstimateTrace, TraceRmse};
use crate::{Error, Result};

/// Open-loop and estimator traces of one sensor case, as read from disk.
#[derive(Debug, Clone)]
pub struct LoadedCase {
    pub name: String,
    pub dir: PathBuf,
    pub open_loop: EstimateTrace,
    pub mhe: EstimateTrace,
}

/// Read a case directory holding `trace_mhe.csv` and `trace_open_loop.csv`.
pub fn load_case(dir: &Path) -> Result<LoadedCase> {
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(LoadedCase {
        name,
        dir: dir.to_path_buf(),
        open_loop: load_trace(&dir.join(OPEN_LOOP_TRACE))?,
        mhe: load_trace(&dir.join(MHE_TRACE))?,
    })
}

/// Per-node error of one trace, with RMSE relative to the node's dynamic
/// range in the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub rmse: TraceRmse,
    pub temperature_range: Vec<f64>,
    pub smoke_range: Vec<f64>,
    /// Smallest reconstructed smoke value, before clamping.
    pub min_smoke: f64,
}

impl Evaluation {
    pub fn relative_temperature(&self, node: usize) -> f64 {
        self.rmse.temperature[node - 1] / self.temperature_range[node - 1]
    }

    pub fn relative_smoke(&self, node: usize) -> f64 {
        self.rmse.smoke[node - 1] / self.smoke_range[node - 1]
    }
}

pub fn evaluate_trace(truth: &TimeSeriesRun, trace: &EstimateTrace) -> Result<Evaluation> {
    if trace.len() != truth.len() && trace.diverged_at.is_none() {
        return Err(Error::Dimension(format!(
            "trace has {} steps, run has {}",
            trace.len(),
            truth.len()
        )));
    }
    Ok(Evaluation {
        rmse: trace.rmse(truth)?,
        temperature_range: truth.temperature.iter().map(|v| dynamic_range(v)).collect(),
        smoke_range: truth.smoke.iter().map(|v| dynamic_range(v)).collect(),
        min_smoke: trace.smoke.iter().flatten().copied().fold(f64::INFINITY, f64::min),
    })
}

/// Write an evaluation as `node,temperature_rmse,temperature_range,
/// smoke_rmse,smoke_range`.
pub fn save_evaluation(path: &Path, ev: &Evaluation) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::parse(path, e.to_string());
    w.write_record([
        "node",
        "temperature_rmse",
        "temperature_range",
        "smoke_rmse",
        "smoke_range",
    ])
    .map_err(csv_err)?;
    for i in 0..ev.rmse.temperature.len() {
        w.write_record([
            (i + 1).to_string(),
            ev.rmse.temperature[i].to_string(),
            ev.temperature_range[i].to_string(),
            ev.rmse.smoke[i].to_string(),
            ev.smoke_range[i].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseSummary {
    pub name: String,
    pub sensors: String,
    pub open_loop: Evaluation,
    pub mhe: Evaluation,
}

impl CaseSummary {
    fn sensor_nodes(&self) -> Vec<usize> {
        self.sensors.split(',').filter_map(|s| s.trim().parse().ok()).collect()
    }

    /// Largest MHE temperature RMSE at a sensor node, relative to range.
    pub fn worst_sensor_temperature(&self) -> f64 {
        self.sensor_nodes()
            .into_iter()
            .map(|i| self.mhe.relative_temperature(i))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub cases: Vec<CaseSummary>,
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::parse(path, e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn cell(v: Option<&f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// `t,truth,open_loop,mhe` for one node and quantity. The open-loop column is
/// blank after a divergence.
fn write_plot(path: &Path, truth: &TimeSeriesRun, ol: &[f64], mhe: &[f64], actual: &[f64]) -> Result<()> {
    let rows: Vec<Vec<String>> = (0..truth.len())
        .map(|k| {
            vec![
                truth.times[k].to_string(),
                actual[k].to_string(),
                cell(ol.get(k)),
                cell(mhe.get(k)),
            ]
        })
        .collect();
    write_csv(path, &["t", "truth", "open_loop", "mhe"], &rows)
}

fn summary_text(report: &Report) -> String {
    let mut s = String::new();
    for c in &report.cases {
        let _ = writeln!(s, "{} (sensors {})", c.name, c.sensors);
        let _ = writeln!(s, "  node  T open-loop      T mhe          S open-loop    S mhe");
        for i in 0..c.mhe.rmse.temperature.len() {
            let _ = writeln!(
                s,
                "  {:>4}  {:<13.6e}  {:<13.6e}  {:<13.6e}  {:<13.6e}",
                i + 1,
                c.open_loop.rmse.temperature[i],
                c.mhe.rmse.temperature[i],
                c.open_loop.rmse.smoke[i],
                c.mhe.rmse.smoke[i]
            );
        }
        let _ = writeln!(
            s,
            "  mean  {:<13.6e}  {:<13.6e}  {:<13.6e}  {:<13.6e}",
            c.open_loop.rmse.mean_temperature(),
            c.mhe.rmse.mean_temperature(),
            c.open_loop.rmse.mean_smoke(),
            c.mhe.rmse.mean_smoke()
        );
        let _ = writeln!(s);
    }
    s
}

/// Build tables, a plain-text summary and plot data from loaded traces.
/// Every number comes from the traces and the ground-truth run.
pub fn write_report(truth: &TimeSeriesRun, cases: &[LoadedCase], out: &Path, plots: &PlotSelection) -> Result<Report> {
    if cases.is_empty() {
        return Err(Error::InvalidArgument("no traces to report".into()));
    }
    let n = truth.node_count();
    if let Some(&bad) = plots
        .thermal_nodes
        .iter()
        .chain(&plots.smoke_nodes)
        .find(|&&i| i == 0 || i > n)
    {
        return Err(Error::InvalidArgument(format!("plot node {bad} outside 1..={n}")));
    }
    create_dir(out)?;
    let mut summaries = Vec::with_capacity(cases.len());
    for case in cases {
        let s = CaseSummary {
            name: case.name.clone(),
            sensors: case.mhe.layout.clone(),
            open_loop: evaluate_trace(truth, &case.open_loop)?,
            mhe: evaluate_trace(truth, &case.mhe)?,
        };
        let dir = out.join(&case.name);
        create_dir(&dir)?;
        save_rmse_table(
            &dir.join("table_temperature.csv"),
            &s.open_loop.rmse.temperature,
            &s.mhe.rmse.temperature,
        )?;
        save_rmse_table(&dir.join("table_smoke.csv"), &s.open_loop.rmse.smoke, &s.mhe.rmse.smoke)?;
        let plot_dir = dir.join("plots");
        create_dir(&plot_dir)?;
        for &i in &plots.thermal_nodes {
            write_plot(
                &plot_dir.join(format!("temperature_node{i}.csv")),
                truth,
                &case.open_loop.temperature[i - 1],
                &case.mhe.temperature[i - 1],
                &truth.temperature[i - 1],
            )?;
        }
        let (ol_smoke, mhe_smoke) = (case.open_loop.smoke_clamped(), case.mhe.smoke_clamped());
        for &i in &plots.smoke_nodes {
            write_plot(
                &plot_dir.join(format!("smoke_node{i}.csv")),
                truth,
                &ol_smoke[i - 1],
                &mhe_smoke[i - 1],
                &truth.smoke[i - 1],
            )?;
        }
        summaries.push(s);
    }
    let report = Report { cases: summaries };
    let rows: Vec<Vec<String>> = report
        .cases
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                c.sensors.replace(',', ";"),
                c.open_loop.rmse.mean_temperature().to_string(),
                c.mhe.rmse.mean_temperature().to_string(),
                c.open_loop.rmse.mean_smoke().to_string(),
                c.mhe.rmse.mean_smoke().to_string(),
                c.worst_sensor_temperature().to_string(),
                c.mhe.min_smoke.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("summary.csv"),
        &[
            "case",
            "sensors",
            "open_loop_mean_temperature_rmse",
            "mhe_mean_temperature_rmse",
            "open_loop_mean_smoke_rmse",
            "mhe_mean_smoke_rmse",
            "mhe_worst_sensor_temperature_relative",
            "mhe_min_smoke",
        ],
        &rows,
    )?;
    let path = out.join("summary.txt");
    std::fs::write(&path, summary_text(&report)).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}
