use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::config::{MheConfig, ObservabilityGate, AUTO_NOISE_FLOOR};
use super::estimator::{MheEstimator, ResolvedWeights};
use super::trace::{EstimateTrace, StepDiagnostics, TraceRmse};
use crate::dataio::{SensorLayout, TimeSeriesRun};
use crate::rom::{open_loop_simulate, TunnelModel};
use crate::{Error, Real, Result};

/// Estimator and open-loop results on one run for one sensor layout.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineReport {
    pub layout: SensorLayout,
    pub mhe: EstimateTrace,
    pub open_loop: EstimateTrace,
    pub mhe_rmse: TraceRmse,
    pub open_loop_rmse: TraceRmse,
    pub weights: ResolvedWeights,
}

/// Sensor readings actually fed to the estimator, `[step][sensor]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub temperature: Vec<Vec<f64>>,
    pub smoke: Vec<Vec<f64>>,
}

/// Readings at the layout's nodes, with seeded Gaussian noise when
/// configured.
pub fn sensor_readings(run: &TimeSeriesRun, layout: &SensorLayout, cfg: &MheConfig) -> Result<Measurements> {
    if layout.node_count() != run.node_count() {
        return Err(Error::InvalidArgument(format!(
            "layout is for {} nodes, run has {}",
            layout.node_count(),
            run.node_count()
        )));
    }
    let noise = cfg.noise;
    let normal = |s: f64| Normal::new(0.0, s).map_err(|e| Error::Config(format!("sensor noise: {e}")));
    let (nt, ns) = (normal(noise.temperature_sigma)?, normal(noise.smoke_sigma)?);
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let nodes: Vec<usize> = layout.nodes().map(|i| i - 1).collect();
    let mut out = Measurements {
        temperature: Vec::with_capacity(run.len()),
        smoke: Vec::with_capacity(run.len()),
    };
    for k in 0..run.len() {
        let mut t = Vec::with_capacity(nodes.len());
        let mut s = Vec::with_capacity(nodes.len());
        for &i in &nodes {
            let e = nt.sample(&mut rng);
            t.push(run.temperature[i][k] + if noise.temperature_sigma > 0.0 { e } else { 0.0 });
        }
        for &i in &nodes {
            let e = ns.sample(&mut rng);
            s.push(run.smoke[i][k] + if noise.smoke_sigma > 0.0 { e } else { 0.0 });
        }
        out.temperature.push(t);
        out.smoke.push(s);
    }
    Ok(out)
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v * v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Measurement standard deviation for `auto` weights: the configured noise
/// level, floored at a small fraction of the measured signal's RMS
/// (temperatures taken relative to ambient).
pub fn auto_sigma(run: &TimeSeriesRun, meas: &Measurements, cfg: &MheConfig) -> (f64, f64) {
    let t_rms = rms(meas
        .temperature
        .iter()
        .enumerate()
        .flat_map(|(k, row)| row.iter().map(move |v| v - run.ambient[k])));
    let s_rms = rms(meas.smoke.iter().flatten().copied());
    let pick = |noise: f64, rms: f64| {
        let s = noise.max(AUTO_NOISE_FLOOR * rms);
        if s > 0.0 {
            s
        } else {
            AUTO_NOISE_FLOOR
        }
    };
    (
        pick(cfg.noise.temperature_sigma, t_rms),
        pick(cfg.noise.smoke_sigma, s_rms),
    )
}

/// Run the estimator over a whole run and collect its trace.
pub fn estimate_run<T: Real>(
    model: &TunnelModel<T>,
    run: &TimeSeriesRun,
    layout: &SensorLayout,
    cfg: &MheConfig,
) -> Result<(EstimateTrace, ResolvedWeights)> {
    let model = model.with_layout(layout)?;
    crate::rom::check_sample_time(&model, run)?;
    let meas = sensor_readings(run, layout, cfg)?;
    let weights = ResolvedWeights::resolve(cfg, &model, auto_sigma(run, &meas, cfg))?;
    let mut est = MheEstimator::new(&model, cfg, &weights, None)?;
    let n = model.node_count();
    let mut trace = EstimateTrace {
        method: "mhe".into(),
        layout: layout.to_string(),
        thermal_dim: model.thermal.state_dim(),
        temperature: vec![Vec::with_capacity(run.len()); n],
        smoke: vec![Vec::with_capacity(run.len()); n],
        ..Default::default()
    };
    let to_vec = |v: &[f64]| DVector::from_iterator(v.len(), v.iter().map(|x| T::lit(*x)));
    for k in 0..run.len() {
        let s = est.step(
            k + 1,
            &to_vec(&meas.temperature[k]),
            &to_vec(&meas.smoke[k]),
            T::lit(run.hrr[k]),
            T::lit(run.ambient[k]),
        )?;
        trace.times.push(run.times[k]);
        trace.states.push(
            s.thermal_state
                .iter()
                .chain(s.smoke_state.iter())
                .map(|v| v.to_f64())
                .collect(),
        );
        for i in 0..n {
            trace.temperature[i].push(s.temperature[i].to_f64());
            trace.smoke[i].push(s.smoke[i].to_f64());
        }
        trace.diagnostics.push(StepDiagnostics {
            thermal_iterations: s.thermal_iterations,
            smoke_iterations: s.smoke_iterations,
            active_constraints: s.active_constraints,
        });
    }
    Ok((trace, weights))
}

/// Estimator run plus the open-loop baseline, with per-node RMSE of both.
pub fn run_offline<T: Real>(
    model: &TunnelModel<T>,
    run: &TimeSeriesRun,
    layout: &SensorLayout,
    cfg: &MheConfig,
) -> Result<OfflineReport> {
    let (mhe, weights) = estimate_run(model, run, layout, cfg)?;
    let open_loop = open_loop_simulate(model, run)?;
    Ok(OfflineReport {
        layout: layout.clone(),
        mhe_rmse: mhe.rmse(run)?,
        open_loop_rmse: open_loop.rmse(run)?,
        mhe,
        open_loop,
        weights,
    })
}

/// Sensor placements compared in the robustness study.
pub fn standard_cases(node_count: usize) -> Result<Vec<(String, SensorLayout)>> {
    [vec![1, 5], vec![5], vec![5, 10], vec![1, 5, 10]]
        .into_iter()
        .enumerate()
        .map(|(i, nodes)| Ok((format!("case{}", i + 1), SensorLayout::new(nodes, node_count)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub name: String,
    pub report: OfflineReport,
}

/// Run every case with the same model and configuration. Cases whose layout
/// leaves part of the state unobservable still run (the gate is relaxed to
/// partial observability); a layout that sees nothing is refused.
pub fn robustness_sweep<T: Real>(
    model: &TunnelModel<T>,
    run: &TimeSeriesRun,
    cfg: &MheConfig,
    cases: &[(String, SensorLayout)],
) -> Result<Vec<CaseResult>> {
    let mut cfg = cfg.clone();
    cfg.observability = ObservabilityGate::Partial;
    cases
        .par_iter()
        .map(|(name, layout)| {
            Ok(CaseResult {
                name: name.clone(),
                report: run_offline(model, run, layout, &cfg)?,
            })
        })
        .collect()
}
