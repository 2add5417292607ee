use nalgebra::DMatrix;

use crate::linalg::singular_values;
use crate::sysid::StateSpace;
use crate::{Error, Real, Result};

/// Forward-Euler discretization `z+ = Ad z + Bd u`, `y = C z + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel<T: Real> {
    pub ad: DMatrix<T>,
    pub bd: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    pub dt: T,
}

impl<T: Real> DiscreteModel<T> {
    pub fn state_dim(&self) -> usize {
        self.ad.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.bd.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
}

/// `Ad = I + dt A`, `Bd = dt B`; `C`, `D` unchanged.
pub fn discretize<T: Real>(model: &StateSpace<T>, dt: T) -> Result<DiscreteModel<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "sample time must be positive, got {dt}"
        )));
    }
    let n = model.order();
    Ok(DiscreteModel {
        ad: DMatrix::identity(n, n) + &model.a * dt,
        bd: &model.b * dt,
        c: model.c.clone(),
        d: model.d.clone(),
        dt,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilityReport {
    pub rank: usize,
    pub state_dim: usize,
    pub observable: bool,
    /// Singular values of the observability matrix, descending.
    pub singular_values: Vec<f64>,
}

pub const OBSERVABILITY_TOLERANCE: f64 = 1e-10;

/// Rank of `[C; C Ad; ...; C Ad^(n-1)]` with the default relative tolerance.
pub fn observability_check<T: Real>(model: &DiscreteModel<T>) -> ObservabilityReport {
    observability_check_with(model, OBSERVABILITY_TOLERANCE)
}

/// As [`observability_check`]; singular values below `rel_tol * sigma_max`
/// do not count toward the rank.
pub fn observability_check_with<T: Real>(model: &DiscreteModel<T>, rel_tol: f64) -> ObservabilityReport {
    let n = model.state_dim();
    let p = model.outputs();
    let obs = observability_matrix(&model.ad, &model.c);
    let sv: Vec<f64> = if n == 0 || p == 0 {
        Vec::new()
    } else {
        singular_values(&obs).iter().map(|s| s.to_f64()).collect()
    };
    let top = sv.first().copied().unwrap_or(0.0);
    let rank = if top > 0.0 {
        sv.iter().filter(|s| **s > rel_tol * top).count()
    } else {
        0
    };
    ObservabilityReport {
        rank,
        state_dim: n,
        observable: rank == n,
        singular_values: sv,
    }
}

pub fn observability_matrix<T: Real>(ad: &DMatrix<T>, c: &DMatrix<T>) -> DMatrix<T> {
    let n = ad.nrows();
    let p = c.nrows();
    let mut obs = DMatrix::zeros(p * n, n);
    let mut block = c.clone();
    for k in 0..n {
        obs.view_mut((k * p, 0), (p, n)).copy_from(&block);
        block = &block * ad;
    }
    obs
}
