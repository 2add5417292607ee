use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub label: String,
    pub capacity_ah: Option<f64>,
    pub ambient_setpoint: Option<f64>,
    pub seed: Option<u64>,
}

/// Uniformly sampled signals of one scenario (or several concatenated ones).
/// Signals are stored column-wise; `temperature[i]` is node `i + 1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeriesRun {
    pub times: Vec<f64>,
    /// Heat release rate, kW.
    pub hrr: Vec<f64>,
    /// Ambient temperature, deg C.
    pub ambient: Vec<f64>,
    /// Node temperatures, deg C.
    pub temperature: Vec<Vec<f64>>,
    /// Node smoke densities, kg/m^3.
    pub smoke: Vec<Vec<f64>>,
    /// Sample indices at which a new scenario starts (excluding 0).
    pub segment_starts: Vec<usize>,
    pub meta: RunMetadata,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    #[serde(flatten)]
    meta: RunMetadata,
    #[serde(default)]
    segment_starts: Vec<usize>,
}

impl TimeSeriesRun {
    pub fn with_capacity(nodes: usize, samples: usize) -> Self {
        Self {
            times: Vec::with_capacity(samples),
            hrr: Vec::with_capacity(samples),
            ambient: Vec::with_capacity(samples),
            temperature: vec![Vec::with_capacity(samples); nodes],
            smoke: vec![Vec::with_capacity(samples); nodes],
            segment_starts: Vec::new(),
            meta: RunMetadata::default(),
        }
    }

    pub fn push_sample(&mut self, t: f64, q: f64, ambient: f64, temperature: &[f64], smoke: &[f64]) {
        self.times.push(t);
        self.hrr.push(q);
        self.ambient.push(ambient);
        for (col, v) in self.temperature.iter_mut().zip(temperature) {
            col.push(*v);
        }
        for (col, v) in self.smoke.iter_mut().zip(smoke) {
            col.push(*v);
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.temperature.len()
    }

    /// Sampling interval; 0 for runs with fewer than two samples.
    pub fn sample_time(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    /// Half-open index ranges of the concatenated segments.
    pub fn segments(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.segment_starts.len() + 1);
        let mut start = 0;
        for &b in &self.segment_starts {
            out.push(start..b);
            start = b;
        }
        out.push(start..self.len());
        out
    }

    /// Structural invariants: equal column lengths, finite values, uniform
    /// time grid, sorted in-range segment starts.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.temperature.len() != self.smoke.len() {
            return Err(Error::Dimension(format!(
                "{} temperature columns but {} smoke columns",
                self.temperature.len(),
                self.smoke.len()
            )));
        }
        let cols = [("Q", &self.hrr), ("T_amb", &self.ambient)];
        for (name, c) in cols {
            if c.len() != n {
                return Err(Error::Dimension(format!(
                    "column {name} has {} samples, expected {n}",
                    c.len()
                )));
            }
        }
        for (i, (t, s)) in self.temperature.iter().zip(&self.smoke).enumerate() {
            if t.len() != n || s.len() != n {
                return Err(Error::Dimension(format!(
                    "node {} columns have the wrong length",
                    i + 1
                )));
            }
        }
        if let Some(row) = uniform_grid_violation(&self.times) {
            return Err(Error::InvalidArgument(format!("non-uniform grid at sample {row}")));
        }
        let mut prev = 0;
        for &b in &self.segment_starts {
            if b <= prev || b >= n {
                return Err(Error::InvalidArgument(format!("invalid segment start {b}")));
            }
            prev = b;
        }
        Ok(())
    }

    /// Physical sanity of surrogate output: smoke `>= 0` and temperature no
    /// more than `tol` below ambient.
    pub fn check_physical(&self, tol: f64) -> Result<()> {
        for (i, col) in self.smoke.iter().enumerate() {
            if let Some(k) = col.iter().position(|v| *v < 0.0) {
                return Err(Error::InvalidArgument(format!("S_{} negative at sample {k}", i + 1)));
            }
        }
        for (i, col) in self.temperature.iter().enumerate() {
            if let Some(k) = col.iter().zip(&self.ambient).position(|(t, a)| *t < a - tol) {
                return Err(Error::InvalidArgument(format!(
                    "T_{} below ambient at sample {k}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn header(&self) -> Vec<String> {
        let n = self.node_count();
        let mut h = vec!["t".to_string(), "Q".to_string(), "T_amb".to_string()];
        h.extend((1..=n).map(|i| format!("T_{i}")));
        h.extend((1..=n).map(|i| format!("S_{i}")));
        h
    }
}

fn uniform_grid_violation(times: &[f64]) -> Option<usize> {
    if times.len() < 2 {
        return None;
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Some(1);
    }
    for (k, w) in times.windows(2).enumerate() {
        let tol = 1e-9 * dt.max(w[0].abs() * 1e-3);
        if ((w[1] - w[0]) - dt).abs() > tol {
            return Some(k + 1);
        }
    }
    None
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Write the run as CSV with header `t,Q,T_amb,T_1..T_N,S_1..S_N`, plus a
/// `<path>.meta.json` sidecar holding metadata and segment starts.
pub fn save_run(run: &TimeSeriesRun, path: &Path) -> Result<()> {
    run.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io_err = |e: csv::Error| Error::parse(path, e.to_string());
    w.write_record(run.header()).map_err(io_err)?;
    let mut row: Vec<String> = Vec::with_capacity(3 + 2 * run.node_count());
    for k in 0..run.len() {
        row.clear();
        row.push(run.times[k].to_string());
        row.push(run.hrr[k].to_string());
        row.push(run.ambient[k].to_string());
        row.extend(run.temperature.iter().map(|c| c[k].to_string()));
        row.extend(run.smoke.iter().map(|c| c[k].to_string()));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let sidecar = Sidecar {
        meta: run.meta.clone(),
        segment_starts: run.segment_starts.clone(),
    };
    let mut f = File::create(&side).map_err(|e| Error::io(&side, e))?;
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::parse(&side, e.to_string()))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&side, e))?;
    Ok(())
}

/// Parse a run CSV. The number of nodes is inferred from the `T_i` columns;
/// every `T_i` needs a matching `S_i`.
pub fn load_run(path: &Path) -> Result<TimeSeriesRun> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(path, format!("header: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let missing = |name: &str| Error::parse(path, format!("missing column `{name}`"));
    let t_col = find("t").ok_or_else(|| missing("t"))?;
    let q_col = find("Q").ok_or_else(|| missing("Q"))?;
    let a_col = find("T_amb").ok_or_else(|| missing("T_amb"))?;
    let mut n = 0;
    for h in &header {
        if let Some(rest) = h.strip_prefix("T_").or_else(|| h.strip_prefix("S_")) {
            if let Ok(i) = rest.parse::<usize>() {
                n = n.max(i);
            }
        }
    }
    if n == 0 {
        return Err(Error::parse(path, "no node columns (T_1 ...)"));
    }
    let mut t_cols = Vec::with_capacity(n);
    let mut s_cols = Vec::with_capacity(n);
    for i in 1..=n {
        let tn = format!("T_{i}");
        t_cols.push(find(&tn).ok_or_else(|| missing(&tn))?);
    }
    for i in 1..=n {
        let sn = format!("S_{i}");
        s_cols.push(find(&sn).ok_or_else(|| missing(&sn))?);
    }
    let mut run = TimeSeriesRun::with_capacity(n, 0);
    let mut temps = vec![0.0; n];
    let mut smoke = vec![0.0; n];
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| Error::parse(path, format!("row {line}: {e}")))?;
        if rec.len() != header.len() {
            return Err(Error::parse(
                path,
                format!(
                    "row {line}: ragged row with {} fields, header has {}",
                    rec.len(),
                    header.len()
                ),
            ));
        }
        let get = |c: usize| -> Result<f64> {
            let raw = rec[c].trim();
            let v: f64 = raw.parse().map_err(|_| {
                Error::parse(
                    path,
                    format!("row {line}, column `{}`: not a number: {raw:?}", header[c]),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    format!("row {line}, column `{}`: non-finite value", header[c]),
                ));
            }
            Ok(v)
        };
        for (dst, &c) in temps.iter_mut().zip(&t_cols) {
            *dst = get(c)?;
        }
        for (dst, &c) in smoke.iter_mut().zip(&s_cols) {
            *dst = get(c)?;
        }
        run.push_sample(get(t_col)?, get(q_col)?, get(a_col)?, &temps, &smoke);
    }
    if run.is_empty() {
        return Err(Error::parse(path, "no data rows"));
    }
    if let Some(row) = uniform_grid_violation(&run.times) {
        return Err(Error::parse(path, format!("non-uniform grid at row {}", row + 2)));
    }
    let side = sidecar_path(path);
    if side.exists() {
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let sc: Sidecar = serde_json::from_str(&text).map_err(|e| Error::parse(&side, e.to_string()))?;
        run.meta = sc.meta;
        run.segment_starts = sc.segment_starts;
    } else {
        run.meta.label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    run.validate().map_err(|e| Error::parse(path, e.to_string()))?;
    Ok(run)
}

/// Stack runs in order. The time axis continues uniformly across joins and
/// each join is recorded in `segment_starts`.
pub fn concatenate_runs(runs: &[TimeSeriesRun]) -> Result<TimeSeriesRun> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
    if runs.len() == 1 {
        return Ok(first.clone());
    }
    let n = first.node_count();
    let dt = first.sample_time();
    for (i, r) in runs.iter().enumerate() {
        if r.node_count() != n {
            return Err(Error::Dimension(format!(
                "run {i} has {} nodes, run 0 has {n}",
                r.node_count()
            )));
        }
        if r.len() >= 2 && (r.sample_time() - dt).abs() > 1e-9 * dt.abs().max(1.0) {
            return Err(Error::Dimension(format!(
                "run {i} has sample time {}, run 0 has {dt}",
                r.sample_time()
            )));
        }
        if r.is_empty() {
            return Err(Error::InvalidArgument(format!("run {i} is empty")));
        }
    }
    let total: usize = runs.iter().map(|r| r.len()).sum();
    let mut out = TimeSeriesRun::with_capacity(n, total);
    let t0 = first.times[0];
    let mut labels = Vec::new();
    for r in runs {
        let offset = out.len();
        if offset > 0 {
            out.segment_starts.push(offset);
        }
        out.segment_starts.extend(r.segment_starts.iter().map(|b| b + offset));
        for k in 0..r.len() {
            let t = t0 + (offset + k) as f64 * dt;
            out.times.push(t);
        }
        out.hrr.extend_from_slice(&r.hrr);
        out.ambient.extend_from_slice(&r.ambient);
        for i in 0..n {
            out.temperature[i].extend_from_slice(&r.temperature[i]);
            out.smoke[i].extend_from_slice(&r.smoke[i]);
        }
        labels.push(r.meta.label.clone());
    }
    out.meta.label = labels.join("+");
    Ok(out)
}
