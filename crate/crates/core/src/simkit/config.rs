use std::path::Path;

use serde::{Deserialize, Serialize};

use super::hrr::HrrProfile;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunnelGeometry {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// Probe positions, meters from the inlet, strictly increasing.
    pub node_positions: Vec<f64>,
    /// Axial extent `[start, end]` of the battery fire, meters from the inlet.
    pub fire_extent: (f64, f64),
}

impl TunnelGeometry {
    pub fn equidistant(length: f64, node_count: usize, spacing: f64) -> Self {
        Self {
            length,
            width: 9.0,
            height: 5.5,
            node_positions: (0..node_count).map(|i| i as f64 * spacing).collect(),
            fire_extent: (3.0, 6.0),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count() < 2 {
            return Err(Error::Config("need at least 2 nodes".into()));
        }
        if !(self.length > 0.0) {
            return Err(Error::Config(format!(
                "tunnel length must be positive (got {})",
                self.length
            )));
        }
        for w in self.node_positions.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Config("node positions must be strictly increasing".into()));
            }
        }
        let first = self.node_positions[0];
        let last = *self.node_positions.last().unwrap();
        if first < 0.0 || last > self.length {
            return Err(Error::Config(format!(
                "node positions must lie within [0, {}]",
                self.length
            )));
        }
        let (a, b) = self.fire_extent;
        if !(a >= 0.0 && a < b && b <= self.length) {
            return Err(Error::Config(format!(
                "fire extent [{a}, {b}] must be a non-empty interval inside [0, {}]",
                self.length
            )));
        }
        Ok(())
    }
}

impl Default for TunnelGeometry {
    fn default() -> Self {
        Self::equidistant(80.0, 10, 8.0)
    }
}

/// Lumped transport coefficients of the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportCoefficients {
    /// Effective (turbulent) thermal diffusivity, m^2/s.
    pub thermal_diffusivity: f64,
    /// Relaxation rate toward ambient through the walls, 1/s.
    pub wall_loss_rate: f64,
    /// Effective smoke diffusivity, m^2/s.
    pub smoke_diffusivity: f64,
    /// Smoke deposition rate, 1/s.
    pub smoke_deposition_rate: f64,
    /// Temperature rise per unit of released energy per unit length, K m/kJ.
    pub temperature_source_gain: f64,
    /// Smoke mass per unit cross-section per released energy, kg/(m^2 kJ).
    pub smoke_source_gain: f64,
}

impl Default for TransportCoefficients {
    fn default() -> Self {
        Self {
            thermal_diffusivity: 2.0,
            wall_loss_rate: 0.01,
            smoke_diffusivity: 1.2,
            smoke_deposition_rate: 0.004,
            temperature_source_gain: 0.5,
            smoke_source_gain: 2.0e-7,
        }
    }
}

impl TransportCoefficients {
    fn validate(&self) -> Result<()> {
        let fields = [
            ("thermal_diffusivity", self.thermal_diffusivity),
            ("wall_loss_rate", self.wall_loss_rate),
            ("smoke_diffusivity", self.smoke_diffusivity),
            ("smoke_deposition_rate", self.smoke_deposition_rate),
            ("temperature_source_gain", self.temperature_source_gain),
            ("smoke_source_gain", self.smoke_source_gain),
        ];
        for (name, v) in fields {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and >= 0 (got {v})")));
            }
        }
        Ok(())
    }
}

/// Seeded flicker on top of the nominal HRR: an AR(1) sequence at the sample
/// rate, `q(t) = q_nominal(t) * max(0, 1 + amplitude * xi(t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrrFluctuation {
    pub amplitude: f64,
    /// Lag-one correlation of the AR(1) sequence, in [0, 1).
    pub correlation: f64,
}

impl Default for HrrFluctuation {
    fn default() -> Self {
        Self {
            amplitude: 0.2,
            correlation: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub geometry: TunnelGeometry,
    pub hrr: HrrProfile,
    /// HRR per Ah used when a scenario sets the capacity, kW/Ah.
    pub kw_per_ah: f64,
    pub fluctuation: HrrFluctuation,
    /// Ambient temperature, deg C.
    pub ambient_temperature: f64,
    /// Inlet ventilation velocity, m/s.
    pub ventilation_velocity: f64,
    /// Grid spacing, m. Must divide the tunnel length.
    pub grid_spacing: f64,
    /// Probe sampling interval, s.
    pub sample_time: f64,
    /// Simulated duration, s; `duration / sample_time` samples are emitted.
    pub duration: f64,
    pub transport: TransportCoefficients,
    /// Internal explicit step, s. `None` picks the largest stable step that
    /// divides `sample_time`.
    pub solver_step: Option<f64>,
    /// Zero outflow at the exit face (used for mass-balance checks).
    pub closed_outlet: bool,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            geometry: TunnelGeometry::default(),
            hrr: HrrProfile::default(),
            kw_per_ah: 2.5,
            fluctuation: HrrFluctuation::default(),
            ambient_temperature: 25.0,
            ventilation_velocity: 1.0,
            grid_spacing: 0.5,
            sample_time: 1.0,
            duration: 600.0,
            transport: TransportCoefficients::default(),
            solver_step: None,
            closed_outlet: false,
            rng_seed: 42,
        }
    }
}

impl SimConfig {
    /// Same configuration for a battery of `capacity` Ah at `ambient` deg C.
    pub fn with_scenario(&self, capacity: f64, ambient: f64) -> Self {
        let mut cfg = self.clone();
        cfg.hrr.capacity = capacity;
        cfg.hrr.q_peak = capacity * self.kw_per_ah;
        cfg.ambient_temperature = ambient;
        cfg
    }

    pub fn sample_count(&self) -> usize {
        (self.duration / self.sample_time + 1e-9).floor() as usize
    }

    /// Largest explicit step for which the explicit update stays positive:
    /// `dt * (2u/dx + 2D/dx^2 + k) <= 1`.
    pub fn max_stable_step(&self) -> f64 {
        let dx = self.grid_spacing;
        let u = self.ventilation_velocity;
        let tr = &self.transport;
        let d = tr.thermal_diffusivity.max(tr.smoke_diffusivity);
        let k = tr.wall_loss_rate.max(tr.smoke_deposition_rate);
        1.0 / (2.0 * u / dx + 2.0 * d / (dx * dx) + k)
    }

    /// Internal step and substeps per sample.
    pub fn solver_schedule(&self) -> Result<(f64, usize)> {
        let bound = self.max_stable_step();
        match self.solver_step {
            Some(dt) => {
                if !(dt > 0.0) {
                    return Err(Error::Config(format!("solver_step must be positive (got {dt})")));
                }
                let n = (self.sample_time / dt - 1e-9).ceil().max(1.0) as usize;
                let step = self.sample_time / n as f64;
                let courant = self.ventilation_velocity * step / self.grid_spacing;
                if step > bound * (1.0 + 1e-12) || courant > 1.0 {
                    return Err(Error::Config(format!(
                        "solver_step {step} s violates the explicit stability bound \
                         dt*(2u/dx + 2D/dx^2 + k) <= 1, i.e. dt <= {bound:.6} s \
                         (advective Courant number u*dt/dx = {courant:.3})"
                    )));
                }
                Ok((step, n))
            }
            None => {
                let n = (self.sample_time / (0.95 * bound)).ceil().max(1.0) as usize;
                Ok((self.sample_time / n as f64, n))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.hrr.validate()?;
        self.transport.validate()?;
        if !(self.ventilation_velocity > 0.0) {
            return Err(Error::Config(format!(
                "ventilation_velocity must be positive (got {})",
                self.ventilation_velocity
            )));
        }
        if !(self.grid_spacing > 0.0) {
            return Err(Error::Config("grid_spacing must be positive".into()));
        }
        let cells = self.geometry.length / self.grid_spacing;
        if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::Config(format!(
                "grid_spacing {} does not divide tunnel length {}",
                self.grid_spacing, self.geometry.length
            )));
        }
        if !(self.sample_time > 0.0) || !(self.duration >= self.sample_time) {
            return Err(Error::Config("need 0 < sample_time <= duration".into()));
        }
        if !(self.kw_per_ah >= 0.0) {
            return Err(Error::Config("kw_per_ah must be >= 0".into()));
        }
        let f = &self.fluctuation;
        if !(f.amplitude >= 0.0) || !(f.correlation >= 0.0 && f.correlation < 1.0) {
            return Err(Error::Config(
                "HRR fluctuation needs amplitude >= 0 and correlation in [0, 1)".into(),
            ));
        }
        self.solver_schedule()?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SimConfigFile = toml::from_str(text).map_err(|e| Error::Config(format!("simulation config: {e}")))?;
        file.into_config()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SimConfigFile = toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        file.into_config()
    }
}

/// Flat key set of the simulation config file. Every key is optional and
/// falls back to [`SimConfig::default`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfigFile {
    pub length: Option<f64>,
    pub width: Option<f64>,
    pub height: Option<f64>,
    pub node_count: Option<usize>,
    pub node_spacing: Option<f64>,
    pub node_positions: Option<Vec<f64>>,
    pub fire_start: Option<f64>,
    pub fire_end: Option<f64>,
    pub t_peak: Option<f64>,
    pub t_end: Option<f64>,
    pub capacity: Option<f64>,
    pub kw_per_ah: Option<f64>,
    pub q_peak: Option<f64>,
    pub hrr_fluctuation: Option<f64>,
    pub hrr_correlation: Option<f64>,
    pub ambient_temperature: Option<f64>,
    pub ventilation_velocity: Option<f64>,
    pub grid_spacing: Option<f64>,
    pub sample_time: Option<f64>,
    pub duration: Option<f64>,
    pub thermal_diffusivity: Option<f64>,
    pub wall_loss_rate: Option<f64>,
    pub smoke_diffusivity: Option<f64>,
    pub smoke_deposition_rate: Option<f64>,
    pub temperature_source_gain: Option<f64>,
    pub smoke_source_gain: Option<f64>,
    pub solver_step: Option<f64>,
    pub closed_outlet: Option<bool>,
    pub rng_seed: Option<u64>,
}

impl SimConfigFile {
    pub fn into_config(self) -> Result<SimConfig> {
        let mut c = SimConfig::default();
        let g = &mut c.geometry;
        if let Some(v) = self.length {
            g.length = v;
        }
        if let Some(v) = self.width {
            g.width = v;
        }
        if let Some(v) = self.height {
            g.height = v;
        }
        match (self.node_positions, self.node_count, self.node_spacing) {
            (Some(p), n, _) => {
                if let Some(n) = n {
                    if n != p.len() {
                        return Err(Error::Config(format!(
                            "node_count {n} disagrees with {} node_positions",
                            p.len()
                        )));
                    }
                }
                g.node_positions = p;
            }
            (None, n, s) => {
                let n = n.unwrap_or(10);
                let s = s.unwrap_or(8.0);
                g.node_positions = (0..n).map(|i| i as f64 * s).collect();
            }
        }
        if let Some(v) = self.fire_start {
            g.fire_extent.0 = v;
        }
        if let Some(v) = self.fire_end {
            g.fire_extent.1 = v;
        }
        if let Some(v) = self.kw_per_ah {
            c.kw_per_ah = v;
        }
        if let Some(v) = self.capacity {
            c.hrr.capacity = v;
            c.hrr.q_peak = v * c.kw_per_ah;
        } else {
            c.hrr.q_peak = c.hrr.capacity * c.kw_per_ah;
        }
        if let Some(v) = self.q_peak {
            c.hrr.q_peak = v;
        }
        if let Some(v) = self.t_peak {
            c.hrr.t_peak = v;
        }
        if let Some(v) = self.t_end {
            c.hrr.t_end = v;
        }
        if let Some(v) = self.hrr_fluctuation {
            c.fluctuation.amplitude = v;
        }
        if let Some(v) = self.hrr_correlation {
            c.fluctuation.correlation = v;
        }
        if let Some(v) = self.ambient_temperature {
            c.ambient_temperature = v;
        }
        if let Some(v) = self.ventilation_velocity {
            c.ventilation_velocity = v;
        }
        if let Some(v) = self.grid_spacing {
            c.grid_spacing = v;
        }
        if let Some(v) = self.sample_time {
            c.sample_time = v;
        }
        if let Some(v) = self.duration {
            c.duration = v;
        }
        let t = &mut c.transport;
        if let Some(v) = self.thermal_diffusivity {
            t.thermal_diffusivity = v;
        }
        if let Some(v) = self.wall_loss_rate {
            t.wall_loss_rate = v;
        }
        if let Some(v) = self.smoke_diffusivity {
            t.smoke_diffusivity = v;
        }
        if let Some(v) = self.smoke_deposition_rate {
            t.smoke_deposition_rate = v;
        }
        if let Some(v) = self.temperature_source_gain {
            t.temperature_source_gain = v;
        }
        if let Some(v) = self.smoke_source_gain {
            t.smoke_source_gain = v;
        }
        c.solver_step = self.solver_step;
        if let Some(v) = self.closed_outlet {
            c.closed_outlet = v;
        }
        if let Some(v) = self.rng_seed {
            c.rng_seed = v;
        }
        c.validate()?;
        Ok(c)
    }
}
