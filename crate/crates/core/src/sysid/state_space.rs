use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::expm;
use crate::{Error, Real, Result};

/// How the continuous model was obtained from the identified discrete one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conversion {
    /// `A = log(Ad) / dt`, `B` inverted from the zero-order-hold integral.
    MatrixLog,
    /// No real logarithm existed, or its poles were too fast for a
    /// forward-Euler rollout at `dt`; `A = (Ad - I) / dt`, `B = Bd / dt`.
    EulerFallback,
    /// Identification saw an identically zero output.
    ZeroOutput,
    /// Built by hand rather than identified.
    Given,
}

/// Continuous-time quadruple `x' = A x + B u`, `y = C x + D u`, together with
/// the sample time of the data it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    pub dt: T,
    pub conversion: Conversion,
    /// Eigenvalues moved to the left half-plane after identification.
    pub reflected_eigenvalues: usize,
}

impl<T: Real> StateSpace<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, d: DMatrix<T>, dt: T) -> Result<Self> {
        let ss = Self {
            a,
            b,
            c,
            d,
            dt,
            conversion: Conversion::Given,
            reflected_eigenvalues: 0,
        };
        ss.check()?;
        Ok(ss)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.a.nrows();
        let ok = self.a.ncols() == n
            && self.b.nrows() == n
            && self.c.ncols() == n
            && self.d.nrows() == self.c.nrows()
            && self.d.ncols() == self.b.ncols();
        if !ok {
            return Err(Error::Dimension(format!(
                "inconsistent quadruple: A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                self.a.nrows(),
                self.a.ncols(),
                self.b.nrows(),
                self.b.ncols(),
                self.c.nrows(),
                self.c.ncols(),
                self.d.nrows(),
                self.d.ncols()
            )));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Exact zero-order-hold discretization at `dt`.
    pub fn zoh(&self, dt: T) -> (DMatrix<T>, DMatrix<T>) {
        let n = self.order();
        let m = self.inputs();
        let mut aug = DMatrix::zeros(n + m, n + m);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&self.a * dt));
        aug.view_mut((0, n), (n, m)).copy_from(&(&self.b * dt));
        let e = expm(&aug);
        (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
    }

    /// Markov parameters `D, C Bd, C Ad Bd, ...` of the zero-order-hold
    /// discretization at the model's own sample time.
    pub fn markov_parameters(&self, count: usize) -> Vec<DMatrix<T>> {
        let (ad, bd) = self.zoh(self.dt);
        markov_of(&ad, &bd, &self.c, &self.d, count)
    }

    /// Forward-Euler rollout: `x+ = (I + dt A) x + dt B u`, `y = C x + D u`.
    /// `u` is `T x m`; returns `T x p`.
    pub fn simulate_euler(&self, u: &DMatrix<T>, x0: &DVector<T>, dt: T) -> Result<DMatrix<T>> {
        let n = self.order();
        if u.ncols() != self.inputs() || x0.len() != n {
            return Err(Error::Dimension(format!(
                "simulate: model has {} inputs and order {n}, got u with {} columns and x0 of length {}",
                self.inputs(),
                u.ncols(),
                x0.len()
            )));
        }
        let ad = DMatrix::<T>::identity(n, n) + &self.a * dt;
        let bd = &self.b * dt;
        Ok(rollout(&ad, &bd, &self.c, &self.d, u, x0))
    }
}

pub(crate) fn markov_of<T: Real>(
    ad: &DMatrix<T>,
    bd: &DMatrix<T>,
    c: &DMatrix<T>,
    d: &DMatrix<T>,
    count: usize,
) -> Vec<DMatrix<T>> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(d.clone());
    let mut ab = bd.clone();
    for _ in 1..count {
        out.push(c * &ab);
        ab = ad * ab;
    }
    out
}

/// Discrete rollout `x+ = Ad x + Bd u`, `y = C x + D u`.
pub(crate) fn rollout<T: Real>(
    ad: &DMatrix<T>,
    bd: &DMatrix<T>,
    c: &DMatrix<T>,
    d: &DMatrix<T>,
    u: &DMatrix<T>,
    x0: &DVector<T>,
) -> DMatrix<T> {
    let steps = u.nrows();
    let mut y = DMatrix::zeros(steps, c.nrows());
    let mut x = x0.clone();
    for k in 0..steps {
        let uk = u.row(k).transpose();
        let yk = c * &x + d * &uk;
        y.row_mut(k).copy_from(&yk.transpose());
        x = ad * &x + bd * &uk;
    }
    y
}
