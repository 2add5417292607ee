use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::SimConfig;
use super::hrr::{hrr_at, HrrProfile};
use crate::dataio::{RunMetadata, TimeSeriesRun};
use crate::Result;

/// Fluctuating HRR actually fed to the fire: the nominal profile times a
/// seeded AR(1) factor defined at the sample instants and interpolated
/// linearly in between.
#[derive(Debug, Clone)]
pub struct HrrDrive {
    profile: HrrProfile,
    sample_time: f64,
    factors: Vec<f64>,
}

impl HrrDrive {
    pub fn new(cfg: &SimConfig) -> Self {
        let n = cfg.sample_count() + 2;
        let f = cfg.fluctuation;
        let mut factors = vec![1.0; n];
        if f.amplitude > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            let innovation = (1.0 - f.correlation * f.correlation).sqrt();
            let mut xi: f64 = StandardNormal.sample(&mut rng);
            for slot in factors.iter_mut() {
                *slot = (1.0 + f.amplitude * xi).max(0.0);
                let eta: f64 = StandardNormal.sample(&mut rng);
                xi = f.correlation * xi + innovation * eta;
            }
        }
        Self {
            profile: cfg.hrr,
            sample_time: cfg.sample_time,
            factors,
        }
    }

    /// Undisturbed drive: exactly the nominal profile.
    pub fn nominal(profile: HrrProfile, sample_time: f64) -> Self {
        Self {
            profile,
            sample_time,
            factors: vec![1.0; 2],
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        let q = hrr_at(&self.profile, t.max(0.0)).unwrap_or(0.0);
        if q == 0.0 {
            return 0.0;
        }
        let pos = t / self.sample_time;
        let last = self.factors.len() - 1;
        let i = (pos.floor() as usize).min(last);
        let factor = if i >= last {
            self.factors[last]
        } else {
            let w = pos - i as f64;
            self.factors[i] * (1.0 - w) + self.factors[i + 1] * w
        };
        q * factor
    }
}

struct Field {
    values: Vec<f64>,
    diffusivity: f64,
    loss_rate: f64,
    reference: f64,
    inlet: f64,
    source_gain: f64,
    scratch: Vec<f64>,
}

impl Field {
    fn step(&mut self, grid: &Grid, u: f64, closed_outlet: bool, q: f64, dt: f64) {
        let m = self.values.len();
        let c = &self.values;
        let dx = grid.dx;
        let d = self.diffusivity;
        // face flux between j and j+1: central advection while the cell
        // Peclet number allows it (keeps all weights non-negative), upwind
        // otherwise
        let central = u * dx <= 2.0 * d;
        let flux = |j: usize| {
            let adv = if central { 0.5 * u * (c[j] + c[j + 1]) } else { u * c[j] };
            adv - d * (c[j + 1] - c[j]) / dx
        };
        let mut left = u * self.inlet;
        for j in 0..m {
            let right = if j + 1 < m {
                flux(j)
            } else if closed_outlet {
                0.0
            } else {
                u * c[j]
            };
            let rate = (left - right) / grid.volume[j] - self.loss_rate * (c[j] - self.reference)
                + self.source_gain * q * grid.fire_weight[j];
            self.scratch[j] = c[j] + dt * rate;
            left = right;
        }
        std::mem::swap(&mut self.values, &mut self.scratch);
    }

    fn sample(&self, grid: &Grid, x: f64) -> f64 {
        let pos = x / grid.dx;
        let i = (pos.floor() as usize).min(self.values.len() - 1);
        if i + 1 >= self.values.len() {
            return self.values[i];
        }
        let w = pos - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

struct Grid {
    dx: f64,
    /// Control-volume length of each grid point (half cells at both ends).
    volume: Vec<f64>,
    /// Share of the fire source per unit volume: overlap / (fire length * volume).
    fire_weight: Vec<f64>,
}

/// Explicit hybrid central/upwind finite-volume solver on a vertex-centred grid. The inlet
/// face carries the ambient (or smoke-free) advective flux, the outlet face
/// is pure outflow unless closed.
pub struct TransportSolver {
    grid: Grid,
    temperature: Field,
    smoke: Field,
    velocity: f64,
    closed_outlet: bool,
    step: f64,
    time: f64,
    injected_smoke: f64,
}

impl TransportSolver {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let (step, _) = cfg.solver_schedule()?;
        let dx = cfg.grid_spacing;
        let cells = (cfg.geometry.length / dx).round() as usize;
        let points = cells + 1;
        let mut volume = vec![dx; points];
        volume[0] = dx / 2.0;
        volume[cells] = dx / 2.0;
        let (a, b) = cfg.geometry.fire_extent;
        let fire_len = b - a;
        let fire_weight = (0..points)
            .map(|j| {
                let x = j as f64 * dx;
                let lo = (x - dx / 2.0).max(0.0);
                let hi = (x + dx / 2.0).min(cfg.geometry.length);
                let overlap = (hi.min(b) - lo.max(a)).max(0.0);
                overlap / (fire_len * volume[j])
            })
            .collect();
        let tr = cfg.transport;
        let amb = cfg.ambient_temperature;
        Ok(Self {
            grid: Grid {
                dx,
                volume,
                fire_weight,
            },
            temperature: Field {
                values: vec![amb; points],
                diffusivity: tr.thermal_diffusivity,
                loss_rate: tr.wall_loss_rate,
                reference: amb,
                inlet: amb,
                source_gain: tr.temperature_source_gain,
                scratch: vec![amb; points],
            },
            smoke: Field {
                values: vec![0.0; points],
                diffusivity: tr.smoke_diffusivity,
                loss_rate: tr.smoke_deposition_rate,
                reference: 0.0,
                inlet: 0.0,
                source_gain: tr.smoke_source_gain,
                scratch: vec![0.0; points],
            },
            velocity: cfg.ventilation_velocity,
            closed_outlet: cfg.closed_outlet,
            step,
            time: 0.0,
            injected_smoke: 0.0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    /// One explicit step, with the HRR evaluated at the start of the step.
    pub fn step(&mut self, drive: &HrrDrive) {
        let q = drive.at(self.time);
        let dt = self.step;
        self.temperature
            .step(&self.grid, self.velocity, self.closed_outlet, q, dt);
        self.smoke.step(&self.grid, self.velocity, self.closed_outlet, q, dt);
        self.injected_smoke += dt * self.smoke.source_gain * q * self.fire_share();
        self.time += dt;
    }

    fn fire_share(&self) -> f64 {
        self.grid
            .fire_weight
            .iter()
            .zip(&self.grid.volume)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Total smoke mass per unit cross-section currently in the tunnel, kg/m^2.
    pub fn smoke_inventory(&self) -> f64 {
        self.smoke
            .values
            .iter()
            .zip(&self.grid.volume)
            .map(|(c, v)| c * v)
            .sum()
    }

    /// Smoke mass per unit cross-section released so far, kg/m^2.
    pub fn injected_smoke(&self) -> f64 {
        self.injected_smoke
    }

    pub fn temperature_at(&self, x: f64) -> f64 {
        self.temperature.sample(&self.grid, x)
    }

    pub fn smoke_at(&self, x: f64) -> f64 {
        self.smoke.sample(&self.grid, x)
    }

    pub fn temperature_field(&self) -> &[f64] {
        &self.temperature.values
    }

    pub fn smoke_field(&self) -> &[f64] {
        &self.smoke.values
    }
}

/// Integrate the surrogate and sample the probes every `sample_time`.
pub fn simulate_ground_truth(cfg: &SimConfig) -> Result<TimeSeriesRun> {
    let mut solver = TransportSolver::new(cfg)?;
    let drive = HrrDrive::new(cfg);
    let (_, substeps) = cfg.solver_schedule()?;
    let samples = cfg.sample_count();
    let nodes = &cfg.geometry.node_positions;
    let mut run = TimeSeriesRun::with_capacity(nodes.len(), samples);
    for k in 0..samples {
        let t = k as f64 * cfg.sample_time;
        let temps: Vec<f64> = nodes.iter().map(|&x| solver.temperature_at(x)).collect();
        let smoke: Vec<f64> = nodes.iter().map(|&x| solver.smoke_at(x)).collect();
        run.push_sample(t, drive.at(t), cfg.ambient_temperature, &temps, &smoke);
        for _ in 0..substeps {
            solver.step(&drive);
        }
        // keep the clock on the sample grid despite accumulated rounding
        solver.time = (k + 1) as f64 * cfg.sample_time;
    }
    run.meta = RunMetadata {
        label: format!("{}Ah_{}C", cfg.hrr.capacity, cfg.ambient_temperature),
        capacity_ah: Some(cfg.hrr.capacity),
        ambient_setpoint: Some(cfg.ambient_temperature),
        seed: Some(cfg.rng_seed),
    };
    Ok(run)
}
