use nalgebra::DVector;

use super::config::{MheConfig, ObservabilityGate};
use super::horizon::{
    HorizonBuffer, HorizonSolution, HorizonSolver, HorizonWeights, OutputConstraints, SolverSettings,
};
use crate::dataio::Channel;
use crate::rom::{discretize, observability_check, CompactModel, DiscreteModel, ObservabilityReport, TunnelModel};
use crate::{Error, Real, Result};

/// Diagonals of `R` and `Q_w` for both chains.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedWeights {
    pub thermal_r: Vec<f64>,
    pub thermal_q: Vec<f64>,
    pub smoke_r: Vec<f64>,
    pub smoke_q: Vec<f64>,
}

impl ResolvedWeights {
    /// Resolve the configured weights; `auto_sigma` gives the measurement
    /// standard deviation used for `auto` entries (thermal, smoke).
    pub fn resolve<T: Real>(cfg: &MheConfig, model: &TunnelModel<T>, auto_sigma: (f64, f64)) -> Result<Self> {
        let p = model.layout.len();
        Ok(Self {
            thermal_r: cfg.thermal.r.diagonal(p, auto_sigma.0 * auto_sigma.0)?,
            thermal_q: cfg.thermal.q.diagonal(model.thermal.state_dim(), f64::NAN)?,
            smoke_r: cfg.smoke.r.diagonal(p, auto_sigma.1 * auto_sigma.1)?,
            smoke_q: cfg.smoke.q.diagonal(model.smoke.state_dim(), f64::NAN)?,
        })
    }
}

/// Current-step estimate of both chains.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEstimate<T: Real> {
    pub k: usize,
    pub thermal_state: DVector<T>,
    pub smoke_state: DVector<T>,
    /// All node temperatures, deg C.
    pub temperature: DVector<T>,
    /// All node smoke densities, kg/m^3.
    pub smoke: DVector<T>,
    pub thermal_iterations: usize,
    pub smoke_iterations: usize,
    pub active_constraints: usize,
}

#[derive(Debug, Clone)]
struct Chain<T: Real> {
    solver: HorizonSolver<T>,
    buffer: HorizonBuffer<T>,
    full: DiscreteModel<T>,
    inputs: Vec<Channel>,
    horizon: usize,
}

impl<T: Real> Chain<T> {
    fn new(
        chain: &CompactModel<T>,
        dt: T,
        weights: HorizonWeights<T>,
        bounds: (Option<f64>, Option<f64>),
        settings: SolverSettings,
        z0: DVector<T>,
    ) -> Result<Self> {
        let sensors = discretize(&chain.sensor_model(), dt)?;
        let full = discretize(&chain.full_model(), dt)?;
        let n = chain.node_count();
        let constraints = OutputConstraints {
            c: full.c.clone(),
            d: full.d.clone(),
            lower: vec![bounds.0.map(T::lit); n],
            upper: vec![bounds.1.map(T::lit); n],
        };
        let horizon = weights.horizon;
        Ok(Self {
            solver: HorizonSolver::new(sensors, weights, Some(constraints), settings)?,
            buffer: HorizonBuffer::new(horizon, z0),
            full,
            inputs: chain.inputs.clone(),
            horizon,
        })
    }

    fn step(&mut self, y: DVector<T>, u: DVector<T>) -> Result<(HorizonSolution<T>, DVector<T>)> {
        self.buffer.push(y, u.clone());
        let sol = self.solver.solve(&self.buffer)?;
        // priors are only updated once a full window has been seen
        if self.buffer.step() >= self.horizon {
            let next = if sol.states.len() > 1 {
                sol.states[1].clone()
            } else {
                &self.full.ad * &sol.states[0] + &self.full.bd * &u
            };
            self.buffer.set_prior(next);
        }
        let out = &self.full.c * sol.current() + &self.full.d * &u;
        Ok((sol, out))
    }
}

/// Sequential thermal-then-smoke moving horizon estimator.
#[derive(Debug, Clone)]
pub struct MheEstimator<T: Real> {
    thermal: Chain<T>,
    smoke: Chain<T>,
    k: usize,
    node_count: usize,
    pub thermal_observability: ObservabilityReport,
    pub smoke_observability: ObservabilityReport,
}

fn gate(report: &ObservabilityReport, gate: ObservabilityGate) -> Result<()> {
    let ok = match gate {
        ObservabilityGate::Full => report.observable,
        ObservabilityGate::Partial => report.rank > 0,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::NotObservable {
            rank: report.rank,
            dim: report.state_dim,
        })
    }
}

impl<T: Real> MheEstimator<T> {
    /// Build an estimator; refuses to start when the sensor layout fails the
    /// configured observability gate. `z0` is the initial estimate of both
    /// compact states (zero when the true state is unknown).
    pub fn new(
        model: &TunnelModel<T>,
        cfg: &MheConfig,
        weights: &ResolvedWeights,
        z0: Option<(DVector<T>, DVector<T>)>,
    ) -> Result<Self> {
        cfg.validate()?;
        let dt = model.dt();
        if let Some(cdt) = cfg.sample_time {
            if (cdt - dt.to_f64()).abs() > 1e-9 * cdt.max(1.0) {
                return Err(Error::Config(format!(
                    "mhe.sample_time {cdt} differs from the model's {}",
                    dt.to_f64()
                )));
            }
        }
        let th_obs = observability_check(&discretize(&model.thermal.sensor_model(), dt)?);
        let sm_obs = observability_check(&discretize(&model.smoke.sensor_model(), dt)?);
        gate(&th_obs, cfg.observability)?;
        gate(&sm_obs, cfg.observability)?;
        let (z0t, z0s) = z0.unwrap_or_else(|| {
            (
                DVector::zeros(model.thermal.state_dim()),
                DVector::zeros(model.smoke.state_dim()),
            )
        });
        if z0t.len() != model.thermal.state_dim() || z0s.len() != model.smoke.state_dim() {
            return Err(Error::Dimension(
                "initial estimate does not match the compact state dimensions".into(),
            ));
        }
        let settings = SolverSettings {
            tolerance: cfg.tolerance,
            max_iterations: cfg.max_iterations,
        };
        let tw = HorizonWeights::from_diagonals(&weights.thermal_r, &weights.thermal_q, cfg.lambda, cfg.horizon)?;
        let sw = HorizonWeights::from_diagonals(&weights.smoke_r, &weights.smoke_q, cfg.lambda, cfg.horizon)?;
        let b = cfg.bounds;
        Ok(Self {
            thermal: Chain::new(
                &model.thermal,
                dt,
                tw,
                (b.temperature_lower, b.temperature_upper),
                settings,
                z0t,
            )?,
            smoke: Chain::new(&model.smoke, dt, sw, (b.smoke_lower, b.smoke_upper), settings, z0s)?,
            k: 0,
            node_count: model.node_count(),
            thermal_observability: th_obs,
            smoke_observability: sm_obs,
        })
    }

    /// Steps processed so far.
    pub fn step_count(&self) -> usize {
        self.k
    }

    /// Process sample `k` (1-based, strictly consecutive): sensor readings of
    /// both chains, heat release rate and ambient temperature.
    pub fn step(
        &mut self,
        k: usize,
        y_thermal: &DVector<T>,
        y_smoke: &DVector<T>,
        hrr: T,
        ambient: T,
    ) -> Result<StepEstimate<T>> {
        if k != self.k + 1 {
            return Err(Error::StepOrder {
                expected: self.k + 1,
                got: k,
            });
        }
        let exo = |inputs: &[Channel], temps: Option<&DVector<T>>| -> DVector<T> {
            DVector::from_iterator(
                inputs.len(),
                inputs.iter().map(|c| match *c {
                    Channel::Hrr => hrr,
                    Channel::Ambient => ambient,
                    Channel::Temperature(i) => temps.map_or(T::zero(), |t| t[i - 1]),
                    Channel::Smoke(_) => T::zero(),
                }),
            )
        };
        let ut = exo(&self.thermal.inputs, None);
        let (st, temps) = self.thermal.step(y_thermal.clone(), ut)?;
        let us = exo(&self.smoke.inputs, Some(&temps));
        let (ss, smoke) = self.smoke.step(y_smoke.clone(), us)?;
        self.k = k;
        debug_assert_eq!(temps.len(), self.node_count);
        Ok(StepEstimate {
            k,
            thermal_state: st.current().clone(),
            smoke_state: ss.current().clone(),
            temperature: temps,
            smoke,
            thermal_iterations: st.iterations,
            smoke_iterations: ss.iterations,
            active_constraints: st.active_constraints + ss.active_constraints,
        })
    }

    pub fn thermal_prior(&self) -> &DVector<T> {
        self.thermal.buffer.prior()
    }

    pub fn smoke_prior(&self) -> &DVector<T> {
        self.smoke.buffer.prior()
    }
}
