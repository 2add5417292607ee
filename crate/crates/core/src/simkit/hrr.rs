use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Specific heat capacity of air, kJ/(kg K).
pub const AIR_SPECIFIC_HEAT: f64 = 1.005;
/// Gravitational acceleration, m/s^2.
pub const GRAVITY: f64 = 9.8;

/// Piecewise-linear battery heat release rate: a ramp from zero to the peak
/// at `t_peak`, a linear decay to zero at `t_end`, zero afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrrProfile {
    /// Time of peak heat release, s.
    pub t_peak: f64,
    /// Time the fire is out, s.
    pub t_end: f64,
    /// Peak heat release rate, kW.
    pub q_peak: f64,
    /// Battery capacity, Ah. Informational; `q_peak` is what drives the fire.
    pub capacity: f64,
}

impl HrrProfile {
    pub fn from_capacity(capacity: f64, kw_per_ah: f64) -> Self {
        Self {
            t_peak: 275.0,
            t_end: 600.0,
            q_peak: capacity * kw_per_ah,
            capacity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_peak > 0.0 && self.t_peak < self.t_end) {
            return Err(Error::Config(format!(
                "HRR profile needs 0 < t_peak < t_end (got t_peak={}, t_end={})",
                self.t_peak, self.t_end
            )));
        }
        if !(self.q_peak >= 0.0) || !self.q_peak.is_finite() {
            return Err(Error::Config(format!("q_peak must be >= 0 (got {})", self.q_peak)));
        }
        Ok(())
    }
}

impl Default for HrrProfile {
    fn default() -> Self {
        Self::from_capacity(243.0, 2.5)
    }
}

/// Heat release rate at time `t` (kW).
pub fn hrr_at(profile: &HrrProfile, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("HRR queried at negative time {t}")));
    }
    let HrrProfile {
        t_peak, t_end, q_peak, ..
    } = *profile;
    let q = if t >= t_end {
        0.0
    } else if t <= t_peak {
        q_peak * t / t_peak
    } else {
        q_peak * (t_end - t) / (t_end - t_peak)
    };
    Ok(q)
}

/// Characteristic fire diameter `D* = (Q / (rho c_p T sqrt(g)))^(2/5)` in
/// meters, for HRR `q` in kW, ambient density in kg/m^3 and ambient
/// temperature in kelvin.
pub fn characteristic_fire_diameter(q: f64, rho_inf: f64, t_inf: f64) -> Result<f64> {
    for (name, v) in [
        ("heat release rate", q),
        ("ambient density", rho_inf),
        ("ambient temperature", t_inf),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} must be positive (got {v})")));
        }
    }
    let bracket = q / (rho_inf * AIR_SPECIFIC_HEAT * t_inf * GRAVITY.sqrt());
    Ok(bracket.powf(0.4))
}
