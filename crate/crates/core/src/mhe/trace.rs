use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::TimeSeriesRun;
use crate::{Error, Result};

/// Per-step solver diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub thermal_iterations: usize,
    pub smoke_iterations: usize,
    pub active_constraints: usize,
}

/// State and output estimates over a run, from either the open-loop model or
/// the estimator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimateTrace {
    /// `"open-loop"` or `"mhe"`.
    pub method: String,
    pub layout: String,
    pub times: Vec<f64>,
    /// Stacked thermal then smoke states, one vector per step.
    pub states: Vec<Vec<f64>>,
    /// Leading entries of each state vector that belong to the thermal chain.
    pub thermal_dim: usize,
    /// Reconstructed node temperatures, deg C; `temperature[i]` is node `i + 1`.
    pub temperature: Vec<Vec<f64>>,
    /// Reconstructed node smoke densities, kg/m^3, unclamped.
    pub smoke: Vec<Vec<f64>>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Step at which the rollout exceeded the divergence guard; the trace is
    /// truncated there.
    pub diverged_at: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct TraceSidecar {
    method: String,
    layout: String,
    thermal_dim: usize,
    diverged_at: Option<usize>,
    diagnostics: Vec<StepDiagnostics>,
}

/// Per-node RMSE of one trace against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRmse {
    pub temperature: Vec<f64>,
    pub smoke: Vec<f64>,
}

impl TraceRmse {
    pub fn mean_temperature(&self) -> f64 {
        mean(&self.temperature)
    }

    pub fn mean_smoke(&self) -> f64 {
        mean(&self.smoke)
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Max minus min of a series.
pub fn dynamic_range(v: &[f64]) -> f64 {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(*x), hi.max(*x))
    });
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

fn rmse_prefix(est: &[f64], truth: &[f64], clamp: bool) -> f64 {
    let n = est.len().min(truth.len());
    if n == 0 {
        return f64::NAN;
    }
    let s: f64 = est[..n]
        .iter()
        .zip(&truth[..n])
        .map(|(e, t)| {
            let e = if clamp { e.max(0.0) } else { *e };
            (e - t) * (e - t)
        })
        .sum();
    (s / n as f64).sqrt()
}

impl EstimateTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.temperature.len()
    }

    /// Smoke with negative values clamped to zero, as used for reporting.
    pub fn smoke_clamped(&self) -> Vec<Vec<f64>> {
        self.smoke
            .iter()
            .map(|c| c.iter().map(|v| v.max(0.0)).collect())
            .collect()
    }

    /// Per-node RMSE against a run, over the steps the trace covers. Smoke is
    /// clamped to zero first.
    pub fn rmse(&self, truth: &TimeSeriesRun) -> Result<TraceRmse> {
        if truth.node_count() != self.node_count() {
            return Err(Error::Dimension(format!(
                "trace has {} nodes, run has {}",
                self.node_count(),
                truth.node_count()
            )));
        }
        if self.len() > truth.len() {
            return Err(Error::Dimension(format!(
                "trace has {} steps, run only {}",
                self.len(),
                truth.len()
            )));
        }
        Ok(TraceRmse {
            temperature: self
                .temperature
                .iter()
                .zip(&truth.temperature)
                .map(|(e, t)| rmse_prefix(e, t, false))
                .collect(),
            smoke: self
                .smoke
                .iter()
                .zip(&truth.smoke)
                .map(|(e, t)| rmse_prefix(e, t, true))
                .collect(),
        })
    }

    pub fn header(&self) -> Vec<String> {
        let nz = self.states.first().map_or(0, |s| s.len());
        let mut h = vec!["t".to_string()];
        h.extend((1..=nz).map(|i| format!("zhat_{i}")));
        h.extend((1..=self.node_count()).map(|i| format!("That_{i}")));
        h.extend((1..=self.node_count()).map(|i| format!("Shat_{i}")));
        h
    }
}

pub(crate) fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Write a trace as CSV `t,zhat_1..,That_1..That_N,Shat_1..Shat_N` plus a
/// `<path>.meta.json` sidecar with diagnostics.
pub fn save_trace(trace: &EstimateTrace, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::parse(path, e.to_string());
    w.write_record(trace.header()).map_err(csv_err)?;
    let mut row = Vec::new();
    for k in 0..trace.len() {
        row.clear();
        row.push(trace.times[k].to_string());
        row.extend(trace.states[k].iter().map(|v| v.to_string()));
        row.extend(trace.temperature.iter().map(|c| c[k].to_string()));
        row.extend(trace.smoke.iter().map(|c| c[k].to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let meta = TraceSidecar {
        method: trace.method.clone(),
        layout: trace.layout.clone(),
        thermal_dim: trace.thermal_dim,
        diverged_at: trace.diverged_at,
        diagnostics: trace.diagnostics.clone(),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::parse(&side, e.to_string()))?;
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn load_trace(path: &Path) -> Result<EstimateTrace> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(path, format!("header: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.first().map(String::as_str) != Some("t") {
        return Err(Error::parse(path, "first column must be `t`"));
    }
    let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
    let (nz, n) = (count("zhat_"), count("That_"));
    if n == 0 || count("Shat_") != n || header.len() != 1 + nz + 2 * n {
        return Err(Error::parse(
            path,
            "expected columns t, zhat_*, That_1..That_N, Shat_1..Shat_N",
        ));
    }
    let mut trace = EstimateTrace {
        temperature: vec![Vec::new(); n],
        smoke: vec![Vec::new(); n],
        ..Default::default()
    };
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| Error::parse(path, format!("row {line}: {e}")))?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| Error::parse(path, format!("row {line}: not a number")))?;
        trace.times.push(vals[0]);
        trace.states.push(vals[1..1 + nz].to_vec());
        for i in 0..n {
            trace.temperature[i].push(vals[1 + nz + i]);
            trace.smoke[i].push(vals[1 + nz + n + i]);
        }
    }
    let side = sidecar_path(path);
    if side.exists() {
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: TraceSidecar = serde_json::from_str(&text).map_err(|e| Error::parse(&side, e.to_string()))?;
        trace.method = meta.method;
        trace.layout = meta.layout;
        trace.thermal_dim = meta.thermal_dim;
        trace.diverged_at = meta.diverged_at;
        trace.diagnostics = meta.diagnostics;
    } else {
        trace.thermal_dim = nz;
    }
    Ok(trace)
}

/// Write a per-node RMSE table: `node,open_loop_rmse,mhe_rmse`.
pub fn save_rmse_table(path: &Path, open_loop: &[f64], mhe: &[f64]) -> Result<()> {
    if open_loop.len() != mhe.len() {
        return Err(Error::Dimension("RMSE columns differ in length".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::parse(path, e.to_string());
    w.write_record(["node", "open_loop_rmse", "mhe_rmse"])
        .map_err(csv_err)?;
    for (i, (o, m)) in open_loop.iter().zip(mhe).enumerate() {
        w.write_record([(i + 1).to_string(), o.to_string(), m.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
