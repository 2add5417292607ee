use nalgebra::{DMatrix, DVector};

use super::state_space::StateSpace;
use super::subspace::{subspace_identify, IdentificationConfig};
use crate::dataio::{extract_node_io, Channel, ModelKind, NodeChannelSpec, TimeSeriesRun};
use crate::{Error, Real, Result};

/// One identified node model with its input wiring.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeModel<T: Real> {
    pub spec: NodeChannelSpec,
    pub model: StateSpace<T>,
}

impl<T: Real> NodeModel<T> {
    pub fn new(spec: NodeChannelSpec, model: StateSpace<T>) -> Result<Self> {
        model.check()?;
        if model.inputs() != spec.inputs.len() || model.outputs() != 1 {
            return Err(Error::Dimension(format!(
                "node {} {} model has {} inputs / {} outputs, wiring needs {} / 1",
                spec.node,
                spec.kind,
                model.inputs(),
                model.outputs(),
                spec.inputs.len()
            )));
        }
        Ok(Self { spec, model })
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn node(&self) -> usize {
        self.spec.node
    }

    pub fn order(&self) -> usize {
        self.model.order()
    }

    pub fn markov_parameters(&self, count: usize) -> Vec<DMatrix<T>> {
        self.model.markov_parameters(count)
    }
}

/// Forward-Euler rollout of a node model; `u` is `T x m`.
pub fn simulate_node<T: Real>(model: &NodeModel<T>, u: &DMatrix<T>, x0: &DVector<T>, dt: T) -> Result<DVector<T>> {
    let y = model.model.simulate_euler(u, x0, dt)?;
    Ok(y.column(0).into_owned())
}

pub fn rmse<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Dimension(format!(
            "rmse needs equal non-empty series (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let sum = a
        .iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + (*x - *y) * (*x - *y));
    Ok((sum / T::lit(a.len() as f64)).sqrt())
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Identify one node from a (possibly concatenated) run.
///
/// Temperatures are referenced to ambient: the regression sees
/// `T_i - T_amb` (thermal outputs) and `T_j - T_amb` (temperature inputs),
/// and the ambient channel itself is not a regressor. The returned model is
/// expressed in the raw channels of `spec`, with the ambient column of `B`
/// equal to minus the sum of the temperature-input columns and, for thermal
/// nodes, an ambient feedthrough of one. Ambient in gives ambient out with a
/// zero state. Regressors and output are scaled to unit RMS before
/// identification, so the state is in output-scaled units.
pub fn identify_node<T: Real>(
    run: &TimeSeriesRun,
    spec: &NodeChannelSpec,
    cfg: &IdentificationConfig,
) -> Result<NodeModel<T>> {
    let io = extract_node_io(run, spec)?;
    let dt = run.sample_time();
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("run needs at least two samples".into()));
    }
    let steps = run.len();
    let amb = &run.ambient;
    let thermal = spec.kind == ModelKind::Thermal;

    let drivers: Vec<usize> = (0..spec.inputs.len())
        .filter(|&j| spec.inputs[j] != Channel::Ambient)
        .collect();
    let mut u_cols: Vec<Vec<f64>> = drivers
        .iter()
        .map(|&j| {
            let col = io.u.column(j);
            if spec.inputs[j].is_temperature() {
                (0..steps).map(|k| col[k] - amb[k]).collect()
            } else {
                col.iter().copied().collect()
            }
        })
        .collect();
    let mut y_dev: Vec<f64> = if thermal {
        (0..steps).map(|k| io.y[k] - amb[k]).collect()
    } else {
        io.y.iter().copied().collect()
    };

    let u_scale: Vec<f64> = u_cols
        .iter()
        .map(|c| {
            let r = rms(c);
            if r > 0.0 {
                r
            } else {
                1.0
            }
        })
        .collect();
    let y_scale = {
        let r = rms(&y_dev);
        if r > 0.0 {
            r
        } else {
            1.0
        }
    };
    for (c, s) in u_cols.iter_mut().zip(&u_scale) {
        c.iter_mut().for_each(|v| *v /= s);
    }
    y_dev.iter_mut().for_each(|v| *v /= y_scale);

    let un = DMatrix::<T>::from_fn(steps, drivers.len(), |r, c| T::lit(u_cols[c][r]));
    let yn = DMatrix::<T>::from_fn(steps, 1, |r, _| T::lit(y_dev[r]));
    let ss = subspace_identify(&un, &yn, &run.segments(), cfg, T::lit(dt))
        .map_err(|e| Error::Identification(format!("node {} {}: {e}", spec.node, spec.kind)))?;

    let n = ss.order();
    let m = spec.inputs.len();
    let ys = T::lit(y_scale);
    let mut b = DMatrix::<T>::zeros(n, m);
    let mut d = DMatrix::<T>::zeros(1, m);
    let amb_col = spec.inputs.iter().position(|c| *c == Channel::Ambient);
    for (jj, &j) in drivers.iter().enumerate() {
        let us = T::lit(u_scale[jj]);
        let bj = ss.b.column(jj) / us;
        let dj = ss.d[(0, jj)] * ys / us;
        b.column_mut(j).copy_from(&bj);
        d[(0, j)] = dj;
        if spec.inputs[j].is_temperature() {
            if let Some(a) = amb_col {
                let nb = b.column(a) - &bj;
                b.column_mut(a).copy_from(&nb);
                d[(0, a)] -= dj;
            }
        }
    }
    if thermal {
        if let Some(a) = amb_col {
            d[(0, a)] += T::one();
        }
    }
    let model = StateSpace {
        a: ss.a,
        b,
        c: ss.c * ys,
        d,
        dt: ss.dt,
        conversion: ss.conversion,
        reflected_eigenvalues: ss.reflected_eigenvalues,
    };
    NodeModel::new(spec.clone(), model)
}

/// Open-loop fit of one node model on a run, driven by the run's own
/// (ground-truth) input channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeValidation {
    pub rmse: f64,
    /// Max minus min of the node's true output over the run.
    pub range: f64,
}

impl NodeValidation {
    pub fn relative(&self) -> f64 {
        if self.range > 0.0 {
            self.rmse / self.range
        } else {
            self.rmse
        }
    }
}

pub fn validate_node(model: &NodeModel<f64>, run: &TimeSeriesRun) -> Result<NodeValidation> {
    let io = extract_node_io(run, &model.spec)?;
    let x0 = DVector::zeros(model.order());
    let mut y_sim = Vec::with_capacity(run.len());
    for seg in run.segments() {
        let u = io.u.rows(seg.start, seg.len()).into_owned();
        let y = simulate_node(model, &u, &x0, run.sample_time())?;
        y_sim.extend(y.iter().copied());
    }
    let truth: Vec<f64> = io.y.iter().copied().collect();
    let (lo, hi) = truth.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(*v), hi.max(*v))
    });
    Ok(NodeValidation {
        rmse: rmse(&y_sim, &truth)?,
        range: hi - lo,
    })
}
