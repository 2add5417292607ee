use nalgebra::{DMatrix, DVector};

use super::cascade::{CompactModel, TunnelModel};
use super::discrete::{discretize, DiscreteModel};
use crate::dataio::{Channel, TimeSeriesRun};
use crate::mhe::{EstimateTrace, StepDiagnostics};
use crate::{Error, Real, Result};

/// Outputs beyond this magnitude count as divergence.
pub const DIVERGENCE_GUARD: f64 = 1e9;

/// Value of each exogenous input of a chain at step `k`. Temperature
/// channels are read from `temperature` rather than the run so the smoke
/// chain can be fed estimated or simulated temperatures.
pub(crate) fn exogenous_input<T: Real>(
    inputs: &[Channel],
    run: &TimeSeriesRun,
    temperature: &[f64],
    k: usize,
) -> DVector<T> {
    DVector::from_iterator(
        inputs.len(),
        inputs.iter().map(|c| {
            T::lit(match *c {
                Channel::Hrr => run.hrr[k],
                Channel::Ambient => run.ambient[k],
                Channel::Temperature(i) => temperature[i - 1],
                Channel::Smoke(i) => run.smoke[i - 1][k],
            })
        }),
    )
}

/// Euler discretization of a chain with the full output map.
pub(crate) fn full_discrete<T: Real>(chain: &CompactModel<T>, dt: T) -> Result<DiscreteModel<T>> {
    discretize(&chain.full_model(), dt)
}

pub(crate) fn check_sample_time<T: Real>(model: &TunnelModel<T>, run: &TimeSeriesRun) -> Result<T> {
    run.validate()?;
    if run.node_count() != model.node_count() {
        return Err(Error::Dimension(format!(
            "model has {} nodes, run has {}",
            model.node_count(),
            run.node_count()
        )));
    }
    let dt = run.sample_time();
    let model_dt = model.dt().to_f64();
    if !(dt > 0.0) || (dt - model_dt).abs() > 1e-9 * model_dt.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "run sample time {dt} differs from the model's {model_dt}"
        )));
    }
    Ok(T::lit(dt))
}

/// Zero-feedback rollout of both chains from zero initial deviation. The
/// smoke chain is driven by the thermal chain's simulated temperatures.
pub fn open_loop_simulate<T: Real>(model: &TunnelModel<T>, run: &TimeSeriesRun) -> Result<EstimateTrace> {
    let zt = DVector::zeros(model.thermal.state_dim());
    let zs = DVector::zeros(model.smoke.state_dim());
    open_loop_simulate_from(model, run, &zt, &zs)
}

/// As [`open_loop_simulate`] from given initial compact states.
pub fn open_loop_simulate_from<T: Real>(
    model: &TunnelModel<T>,
    run: &TimeSeriesRun,
    z0_thermal: &DVector<T>,
    z0_smoke: &DVector<T>,
) -> Result<EstimateTrace> {
    let dt = check_sample_time(model, run)?;
    if z0_thermal.len() != model.thermal.state_dim() || z0_smoke.len() != model.smoke.state_dim() {
        return Err(Error::Dimension(
            "initial state does not match the compact state dimensions".into(),
        ));
    }
    let th = full_discrete(&model.thermal, dt)?;
    let sm = full_discrete(&model.smoke, dt)?;
    let n = model.node_count();
    let steps = run.len();
    let mut trace = EstimateTrace {
        method: "open-loop".into(),
        layout: String::new(),
        thermal_dim: th.state_dim(),
        temperature: vec![Vec::with_capacity(steps); n],
        smoke: vec![Vec::with_capacity(steps); n],
        ..Default::default()
    };
    let mut zt = z0_thermal.clone();
    let mut zs = z0_smoke.clone();
    let mut temps = vec![0.0; n];
    for k in 0..steps {
        let ut = exogenous_input::<T>(&model.thermal.inputs, run, &temps, k);
        let yt = &th.c * &zt + &th.d * &ut;
        for (dst, v) in temps.iter_mut().zip(yt.iter()) {
            *dst = v.to_f64();
        }
        let us = exogenous_input::<T>(&model.smoke.inputs, run, &temps, k);
        let ys = &sm.c * &zs + &sm.d * &us;
        let diverged = yt
            .iter()
            .chain(ys.iter())
            .any(|v| !(v.to_f64().abs() <= DIVERGENCE_GUARD));
        if diverged {
            trace.diverged_at = Some(k);
            break;
        }
        trace.times.push(run.times[k]);
        trace
            .states
            .push(zt.iter().chain(zs.iter()).map(|v| v.to_f64()).collect());
        for i in 0..n {
            trace.temperature[i].push(temps[i]);
            trace.smoke[i].push(ys[i].to_f64());
        }
        trace.diagnostics.push(StepDiagnostics::default());
        zt = &th.ad * &zt + &th.bd * &ut;
        zs = &sm.ad * &zs + &sm.bd * &us;
    }
    Ok(trace)
}

/// Per-node sequential rollout: each node is simulated on its own with the
/// upstream node's simulated output as input. Used as an oracle for the
/// compact assembly. Returns `steps x N` node outputs of one chain, with the
/// given temperature signals (`steps x N`) feeding smoke nodes.
pub fn sequential_rollout<T: Real>(
    chain: &[crate::sysid::NodeModel<T>],
    run: &TimeSeriesRun,
    temperatures: Option<&DMatrix<f64>>,
    dt: T,
) -> Result<DMatrix<f64>> {
    let n = chain.len();
    let steps = run.len();
    let mut out = DMatrix::<f64>::zeros(steps, n);
    for (i, node) in chain.iter().enumerate() {
        let m = node.spec.inputs.len();
        let mut u = DMatrix::<T>::zeros(steps, m);
        for (j, ch) in node.spec.inputs.iter().enumerate() {
            for k in 0..steps {
                let v = match *ch {
                    Channel::Hrr => run.hrr[k],
                    Channel::Ambient => run.ambient[k],
                    Channel::Temperature(t) if node.kind() == crate::dataio::ModelKind::Thermal => {
                        if t != node.node() - 1 || i == 0 {
                            return Err(Error::Assembly(format!(
                                "unexpected input {ch} on node {}",
                                node.node()
                            )));
                        }
                        out[(k, i - 1)]
                    }
                    Channel::Temperature(t) => match temperatures {
                        Some(tm) => tm[(k, t - 1)],
                        None => run.temperature[t - 1][k],
                    },
                    Channel::Smoke(s) => {
                        if s != node.node() - 1 || i == 0 {
                            return Err(Error::Assembly(format!(
                                "unexpected input {ch} on node {}",
                                node.node()
                            )));
                        }
                        out[(k, i - 1)]
                    }
                };
                u[(k, j)] = T::lit(v);
            }
        }
        let y = node.model.simulate_euler(&u, &DVector::zeros(node.order()), dt)?;
        for k in 0..steps {
            out[(k, i)] = y[(k, 0)].to_f64();
        }
    }
    Ok(out)
}
