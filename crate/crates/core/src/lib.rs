//! Reduced-order temperature and smoke models for a ventilated tunnel, and a
//! constrained moving horizon estimator that reconstructs the full spatial
//! profile from a handful of sensors.
//!
//! The pipeline is split into modules that mirror the workflow:
//!
//! * [`simkit`] generates ground truth with a 1-D advection-diffusion surrogate
//!   driven by a battery heat release rate profile.
//! * [`dataio`] reads, writes, concatenates and slices the resulting runs.
//! * [`sysid`] identifies one small state-space model per node and kind.
//! * [`rom`] chains those node models into compact tunnel-wide models.
//! * [`mhe`] runs the moving horizon estimator over the compact models.
//! * [`harness`] orchestrates experiments and writes reports.
//!
//! The numerical modules are generic over the scalar type (`T: Real`), with
//! `f64` aliases exported at the crate root. Measured data and files are always
//! `f64`.

// NaN-rejecting checks are written as negated comparisons on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mhe;
pub mod rom;
pub mod simkit;
pub mod sysid;

pub use error::{Error, Result};

use nalgebra::RealField;
use std::fmt;

/// Scalar types usable by the numerical modules (`f32`, `f64`).
pub trait Real: RealField + Copy + fmt::Debug + fmt::Display + fmt::LowerExp {
    /// Lossy conversion from an `f64` literal or measured value.
    fn lit(v: f64) -> Self;
    /// Lossy conversion back to `f64` for reporting.
    fn to_f64(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

pub type StateSpace = sysid::StateSpace<f64>;
pub type StateSpace32 = sysid::StateSpace<f32>;
pub type NodeModel = sysid::NodeModel<f64>;
pub type NodeModel32 = sysid::NodeModel<f32>;

pub type CompactModel = rom::CompactModel<f64>;
pub type CompactModel32 = rom::CompactModel<f32>;
pub type TunnelModel = rom::TunnelModel<f64>;
pub type TunnelModel32 = rom::TunnelModel<f32>;
pub type DiscreteModel = rom::DiscreteModel<f64>;
pub type DiscreteModel32 = rom::DiscreteModel<f32>;
pub type HorizonBuffer = mhe::HorizonBuffer<f64>;
pub type HorizonBuffer32 = mhe::HorizonBuffer<f32>;
pub type MheEstimator = mhe::MheEstimator<f64>;
pub type MheEstimator32 = mhe::MheEstimator<f32>;
