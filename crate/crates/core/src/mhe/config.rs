use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A weighting matrix given as a multiple of the identity, a diagonal, or
/// left to be derived from the measurement scale (`"auto"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Named(WeightRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightRule {
    /// Measurement variance estimate: the configured sensor noise variance,
    /// floored at `(AUTO_NOISE_FLOOR * signal RMS)^2`.
    Auto,
}

/// Relative noise floor used by [`WeightRule::Auto`].
pub const AUTO_NOISE_FLOOR: f64 = 1e-3;

impl Weight {
    pub fn auto() -> Self {
        Weight::Named(WeightRule::Auto)
    }

    pub fn is_auto(&self) -> bool {
        matches!(self, Weight::Named(WeightRule::Auto))
    }

    /// Diagonal entries for dimension `dim`; `auto_value` fills in for `auto`.
    pub fn diagonal(&self, dim: usize, auto_value: f64) -> Result<Vec<f64>> {
        let d = match self {
            Weight::Scalar(v) => vec![*v; dim],
            Weight::Diagonal(v) => {
                if v.len() != dim {
                    return Err(Error::Config(format!(
                        "diagonal weight has {} entries, expected {dim}",
                        v.len()
                    )));
                }
                v.clone()
            }
            Weight::Named(WeightRule::Auto) => vec![auto_value; dim],
        };
        if let Some(bad) = d.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("weights must be positive and finite, got {bad}")));
        }
        Ok(d)
    }
}

/// Measurement (`r`) and process (`q`) weighting of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainWeights {
    #[serde(default = "Weight::auto")]
    pub r: Weight,
    #[serde(default = "default_q")]
    pub q: Weight,
}

fn default_q() -> Weight {
    Weight::Scalar(1e-2)
}

impl Default for ChainWeights {
    fn default() -> Self {
        Self {
            r: Weight::auto(),
            q: default_q(),
        }
    }
}

/// Box constraints on reconstructed outputs; `None` leaves a side open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBounds {
    /// deg C
    pub temperature_lower: Option<f64>,
    pub temperature_upper: Option<f64>,
    /// kg/m^3
    pub smoke_lower: Option<f64>,
    pub smoke_upper: Option<f64>,
}

impl Default for OutputBounds {
    fn default() -> Self {
        Self {
            temperature_lower: Some(0.0),
            temperature_upper: None,
            smoke_lower: Some(0.0),
            smoke_upper: None,
        }
    }
}

impl OutputBounds {
    pub fn none() -> Self {
        Self {
            temperature_lower: None,
            temperature_upper: None,
            smoke_lower: None,
            smoke_upper: None,
        }
    }
}

/// Additive zero-mean Gaussian noise on sensor readings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorNoise {
    /// deg C
    pub temperature_sigma: f64,
    /// kg/m^3
    pub smoke_sigma: f64,
    pub seed: u64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self {
            temperature_sigma: 0.0,
            smoke_sigma: 0.0,
            seed: 7,
        }
    }
}

/// What the estimator requires of the sensor layout before it runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservabilityGate {
    /// Both chains fully observable.
    Full,
    /// Some state observable in each chain (rank > 0).
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MheConfig {
    /// Horizon length `W` in steps.
    pub horizon: usize,
    /// Arrival-cost weight `lambda`.
    pub lambda: f64,
    pub thermal: ChainWeights,
    pub smoke: ChainWeights,
    pub bounds: OutputBounds,
    /// Relative feasibility tolerance of the constrained solve.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub noise: SensorNoise,
    pub observability: ObservabilityGate,
    /// Sample time, seconds; must match the model when given.
    pub sample_time: Option<f64>,
}

impl Default for MheConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            lambda: 1.0,
            thermal: ChainWeights::default(),
            smoke: ChainWeights::default(),
            bounds: OutputBounds::default(),
            tolerance: 1e-9,
            max_iterations: 500,
            noise: SensorNoise::default(),
            observability: ObservabilityGate::Full,
            sample_time: None,
        }
    }
}

impl MheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("mhe.horizon must be at least 1".into()));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "mhe.lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("mhe.tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("mhe.max_iterations must be positive".into()));
        }
        if !(self.noise.temperature_sigma >= 0.0) || !(self.noise.smoke_sigma >= 0.0) {
            return Err(Error::Config("sensor noise sigmas must be non-negative".into()));
        }
        if let Some(dt) = self.sample_time {
            if !(dt > 0.0) {
                return Err(Error::Config("mhe.sample_time must be positive".into()));
            }
        }
        let b = &self.bounds;
        for (lo, hi, name) in [
            (b.temperature_lower, b.temperature_upper, "temperature"),
            (b.smoke_lower, b.smoke_upper, "smoke"),
        ] {
            if let (Some(lo), Some(hi)) = (lo, hi) {
                if lo > hi {
                    return Err(Error::Config(format!("{name} bounds are empty: {lo} > {hi}")));
                }
            }
        }
        for (w, name) in [
            (&self.thermal.r, "thermal.r"),
            (&self.thermal.q, "thermal.q"),
            (&self.smoke.r, "smoke.r"),
            (&self.smoke.q, "smoke.q"),
        ] {
            if let Weight::Scalar(v) = w {
                if !(*v > 0.0) {
                    return Err(Error::Config(format!("mhe.{name} must be positive, got {v}")));
                }
            }
            if w.is_auto() && name.ends_with(".q") {
                return Err(Error::Config(format!("mhe.{name} cannot be auto")));
            }
        }
        Ok(())
    }
}

/// Effective horizon and arrival-cost weight at step `k` (1-based): during
/// warm-up (`k < W`) the window holds `k` samples and the arrival cost is
/// scaled by `W / k`.
pub fn effective_horizon(k: usize, horizon: usize, lambda: f64) -> (usize, f64) {
    if k == 0 {
        return (0, lambda);
    }
    if k < horizon {
        (k, lambda * horizon as f64 / k as f64)
    } else {
        (horizon, lambda)
    }
}
