use std::collections::{HashMap, VecDeque};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::config::effective_horizon;
use crate::rom::DiscreteModel;
use crate::{Error, Real, Result};

/// Last `W` measurements and inputs of one chain, plus the prior on the
/// window's first state.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonBuffer<T: Real> {
    capacity: usize,
    y: VecDeque<DVector<T>>,
    u: VecDeque<DVector<T>>,
    prior: DVector<T>,
    /// Samples received so far.
    k: usize,
}

impl<T: Real> HorizonBuffer<T> {
    pub fn new(capacity: usize, prior: DVector<T>) -> Self {
        Self {
            capacity: capacity.max(1),
            y: VecDeque::with_capacity(capacity),
            u: VecDeque::with_capacity(capacity),
            prior,
            k: 0,
        }
    }

    pub fn push(&mut self, y: DVector<T>, u: DVector<T>) {
        if self.y.len() == self.capacity {
            self.y.pop_front();
            self.u.pop_front();
        }
        self.y.push_back(y);
        self.u.push_back(u);
        self.k += 1;
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn step(&self) -> usize {
        self.k
    }

    pub fn prior(&self) -> &DVector<T> {
        &self.prior
    }

    pub fn set_prior(&mut self, prior: DVector<T>) {
        self.prior = prior;
    }

    pub fn measurements(&self) -> &VecDeque<DVector<T>> {
        &self.y
    }

    pub fn inputs(&self) -> &VecDeque<DVector<T>> {
        &self.u
    }
}

/// Box constraints on `c z + d u`, one optional bound pair per output row.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputConstraints<T: Real> {
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    pub lower: Vec<Option<T>>,
    pub upper: Vec<Option<T>>,
}

impl<T: Real> OutputConstraints<T> {
    pub fn is_empty(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(Option::is_none)
    }
}

/// Inverse weights of one chain and the base arrival-cost weight.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonWeights<T: Real> {
    pub r_inv: DMatrix<T>,
    pub q_inv: DMatrix<T>,
    pub lambda: T,
    pub horizon: usize,
}

impl<T: Real> HorizonWeights<T> {
    /// From the diagonals of `R` and `Q_w`.
    pub fn from_diagonals(r: &[f64], q: &[f64], lambda: f64, horizon: usize) -> Result<Self> {
        let inv = |v: &[f64]| -> Result<DMatrix<T>> {
            if let Some(bad) = v.iter().find(|x| !(**x > 0.0)) {
                return Err(Error::InvalidArgument(format!("weights must be positive, got {bad}")));
            }
            Ok(DMatrix::from_diagonal(&DVector::from_iterator(
                v.len(),
                v.iter().map(|x| T::lit(1.0 / x)),
            )))
        };
        Ok(Self {
            r_inv: inv(r)?,
            q_inv: inv(q)?,
            lambda: T::lit(lambda),
            horizon,
        })
    }

    /// From full positive definite `R` and `Q_w`.
    pub fn from_matrices(r: &DMatrix<T>, q: &DMatrix<T>, lambda: T, horizon: usize) -> Result<Self> {
        let inv = |m: &DMatrix<T>, name: &str| {
            Cholesky::new(m.clone())
                .map(|c| c.inverse())
                .ok_or_else(|| Error::InvalidArgument(format!("{name} is not positive definite")))
        };
        Ok(Self {
            r_inv: inv(r, "R")?,
            q_inv: inv(q, "Q_w")?,
            lambda,
            horizon,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 500,
        }
    }
}

/// Optimal window trajectory, oldest state first.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSolution<T: Real> {
    pub states: Vec<DVector<T>>,
    /// Active-set iterations (0 when the unconstrained optimum is feasible).
    pub iterations: usize,
    pub active_constraints: usize,
}

impl<T: Real> HorizonSolution<T> {
    pub fn current(&self) -> &DVector<T> {
        self.states.last().expect("solution has at least one state")
    }
}

/// One chain's windowed least-squares problem with the normal-matrix
/// factorizations cached per (window length, arrival weight).
#[derive(Debug, Clone)]
pub struct HorizonSolver<T: Real> {
    model: DiscreteModel<T>,
    weights: HorizonWeights<T>,
    constraints: Option<OutputConstraints<T>>,
    settings: SolverSettings,
    ctrc: DMatrix<T>,
    atqa: DMatrix<T>,
    atq: DMatrix<T>,
    cache: HashMap<(usize, u64), Cholesky<T, Dyn>>,
}

type Key = (usize, u64);

impl<T: Real> HorizonSolver<T> {
    pub fn new(
        model: DiscreteModel<T>,
        weights: HorizonWeights<T>,
        constraints: Option<OutputConstraints<T>>,
        settings: SolverSettings,
    ) -> Result<Self> {
        let (n, p) = (model.state_dim(), model.outputs());
        if weights.r_inv.shape() != (p, p) {
            return Err(Error::Dimension(format!(
                "R must be {p}x{p}, got {}x{}",
                weights.r_inv.nrows(),
                weights.r_inv.ncols()
            )));
        }
        if weights.q_inv.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "Q_w must be {n}x{n}, got {}x{}",
                weights.q_inv.nrows(),
                weights.q_inv.ncols()
            )));
        }
        if let Some(c) = &constraints {
            let rows = c.c.nrows();
            if c.c.ncols() != n
                || c.d.shape() != (rows, model.inputs())
                || c.lower.len() != rows
                || c.upper.len() != rows
            {
                return Err(Error::Dimension("output constraints do not match the model".into()));
            }
        }
        let ctr = model.c.transpose() * &weights.r_inv;
        let ctrc = &ctr * &model.c;
        let atq = model.ad.transpose() * &weights.q_inv;
        let atqa = &atq * &model.ad;
        let constraints = constraints.filter(|c| !c.is_empty());
        Ok(Self {
            model,
            weights,
            constraints,
            settings,
            ctrc,
            atqa,
            atq,
            cache: HashMap::new(),
        })
    }

    pub fn model(&self) -> &DiscreteModel<T> {
        &self.model
    }

    pub fn constraints(&self) -> Option<&OutputConstraints<T>> {
        self.constraints.as_ref()
    }

    fn key(w: usize, lambda: T) -> Key {
        (w, lambda.to_f64().to_bits())
    }

    /// Block-tridiagonal normal matrix of a window of `w` states.
    pub fn normal_matrix(&self, w: usize, lambda: T) -> DMatrix<T> {
        let n = self.model.state_dim();
        let mut h = DMatrix::zeros(w * n, w * n);
        for j in 0..w {
            let mut blk = self.ctrc.clone();
            if j + 1 < w {
                blk += &self.atqa;
            }
            if j > 0 {
                blk += &self.weights.q_inv;
            }
            if j == 0 {
                for i in 0..n {
                    blk[(i, i)] += lambda;
                }
            }
            h.view_mut((j * n, j * n), (n, n)).copy_from(&blk);
            if j + 1 < w {
                let off = -&self.atq;
                h.view_mut((j * n, (j + 1) * n), (n, n)).copy_from(&off);
                h.view_mut(((j + 1) * n, j * n), (n, n)).copy_from(&off.transpose());
            }
        }
        h
    }

    fn factor(&mut self, w: usize, lambda: T) -> Result<Key> {
        let key = Self::key(w, lambda);
        if !self.cache.contains_key(&key) {
            let h = self.normal_matrix(w, lambda);
            let chol = Cholesky::new(h)
                .ok_or_else(|| Error::SingularNormalMatrix(format!("window of {w} states, lambda {lambda:e}")))?;
            self.cache.insert(key, chol);
        }
        Ok(key)
    }

    /// Right-hand side of the normal equations.
    pub fn gradient(&self, buffer: &HorizonBuffer<T>, lambda: T) -> DVector<T> {
        let n = self.model.state_dim();
        let w = buffer.len();
        let ctr = self.model.c.transpose() * &self.weights.r_inv;
        let mut g = DVector::zeros(w * n);
        let bu: Vec<DVector<T>> = buffer.inputs().iter().map(|u| &self.model.bd * u).collect();
        for (j, (y, u)) in buffer.measurements().iter().zip(buffer.inputs()).enumerate() {
            let mut gj = &ctr * (y - &self.model.d * u);
            if j + 1 < w {
                gj -= &self.atq * &bu[j];
            }
            if j > 0 {
                gj += &self.weights.q_inv * &bu[j - 1];
            }
            if j == 0 {
                gj += buffer.prior() * lambda;
            }
            g.rows_mut(j * n, n).copy_from(&gj);
        }
        g
    }

    /// Solve the window held in `buffer` at its current effective horizon.
    pub fn solve(&mut self, buffer: &HorizonBuffer<T>) -> Result<HorizonSolution<T>> {
        if buffer.is_empty() {
            return Err(Error::InvalidArgument("horizon buffer is empty".into()));
        }
        let p = self.model.outputs();
        let m = self.model.inputs();
        for (y, u) in buffer.measurements().iter().zip(buffer.inputs()) {
            if y.len() != p || u.len() != m {
                return Err(Error::Dimension(format!(
                    "buffer holds y of length {} and u of length {}, model expects {p} and {m}",
                    y.len(),
                    u.len()
                )));
            }
        }
        if buffer.prior().len() != self.model.state_dim() {
            return Err(Error::Dimension("prior does not match the state dimension".into()));
        }
        let (w_eff, lambda_eff) = effective_horizon(buffer.step(), self.weights.horizon, self.weights.lambda.to_f64());
        let w = buffer.len();
        debug_assert!(w == w_eff || self.weights.horizon != buffer.capacity());
        let lambda = T::lit(lambda_eff);
        let key = self.factor(w, lambda)?;
        let g = self.gradient(buffer, lambda);
        let chol = &self.cache[&key];
        let x_u = chol.solve(&g);
        if x_u.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularNormalMatrix("non-finite unconstrained solution".into()));
        }
        let (x, iterations, active) = match &self.constraints {
            None => (x_u, 0, 0),
            Some(cons) => active_set(chol, &x_u, cons, buffer, self.model.state_dim(), &self.settings)?,
        };
        let n = self.model.state_dim();
        let states = (0..w).map(|j| x.rows(j * n, n).into_owned()).collect();
        Ok(HorizonSolution {
            states,
            iterations,
            active_constraints: active,
        })
    }
}

/// One inequality `sign * (c_row . z_j) >= h`.
struct Row<T: Real> {
    step: usize,
    out: usize,
    sign: T,
    h: T,
}

/// Dual active-set (Goldfarb-Idnani) solve of
/// `min 1/2 x'Hx - g'x  s.t.  G x >= h`, starting from the unconstrained
/// optimum `x_u`. Multipliers `mu >= 0` give `x = x_u + H^-1 G_P' mu_P`; the
/// working set stays linearly independent, so a row that depends on it only
/// enters after a blocking row has been dropped.
fn active_set<T: Real>(
    chol: &Cholesky<T, Dyn>,
    x_u: &DVector<T>,
    cons: &OutputConstraints<T>,
    buffer: &HorizonBuffer<T>,
    n: usize,
    settings: &SolverSettings,
) -> Result<(DVector<T>, usize, usize)> {
    let mut rows: Vec<Row<T>> = Vec::new();
    for (j, u) in buffer.inputs().iter().enumerate() {
        let du = &cons.d * u;
        for r in 0..cons.c.nrows() {
            if let Some(lo) = cons.lower[r] {
                rows.push(Row {
                    step: j,
                    out: r,
                    sign: T::one(),
                    h: lo - du[r],
                });
            }
            if let Some(hi) = cons.upper[r] {
                rows.push(Row {
                    step: j,
                    out: r,
                    sign: -T::one(),
                    h: du[r] - hi,
                });
            }
        }
    }
    let h_scale = rows.iter().fold(T::one(), |acc, r| acc.max(r.h.abs()));
    // bounds are met well inside the configured tolerance
    let tol = T::lit(settings.tolerance * 1e-3) * h_scale;
    let dim = x_u.len();
    let row_vec = |r: &Row<T>| -> DVector<T> {
        let mut v = DVector::zeros(dim);
        for s in 0..n {
            v[r.step * n + s] = cons.c[(r.out, s)] * r.sign;
        }
        v
    };
    let residual = |x: &DVector<T>, r: &Row<T>| -> T {
        let mut acc = T::zero();
        for s in 0..n {
            acc += cons.c[(r.out, s)] * x[r.step * n + s];
        }
        acc * r.sign - r.h
    };

    let mut x = x_u.clone();
    let mut passive: Vec<usize> = Vec::new();
    let mut mu: Vec<T> = Vec::new();
    // row index -> (G_i', H^-1 G_i')
    let mut cols: HashMap<usize, (DVector<T>, DVector<T>)> = HashMap::new();
    let mut iterations = 0;
    let fail = |x: &DVector<T>, res: T, it: usize| Error::NonConvergence {
        iterations: it,
        residual: res.to_f64(),
        last_iterate: x.iter().map(|v| v.to_f64()).collect(),
    };
    let eps = T::default_epsilon() * T::lit(1e3);
    loop {
        let mut worst: Option<(usize, T)> = None;
        for (i, r) in rows.iter().enumerate() {
            if passive.contains(&i) {
                continue;
            }
            let v = residual(&x, r);
            if v < -tol && worst.is_none_or(|(_, w)| v < w) {
                worst = Some((i, v));
            }
        }
        let Some((q, viol)) = worst else {
            return Ok((x, iterations, passive.len()));
        };
        cols.entry(q).or_insert_with(|| {
            let gi = row_vec(&rows[q]);
            let hi = chol.solve(&gi);
            (gi, hi)
        });
        let mut t_q = T::zero();
        loop {
            iterations += 1;
            if iterations > settings.max_iterations {
                return Err(fail(&x, -viol, iterations - 1));
            }
            let k = passive.len();
            let m_qq = cols[&q].0.dot(&cols[&q].1);
            // change of the passive multipliers per unit increase of mu_q
            let d = if k == 0 {
                DVector::zeros(0)
            } else {
                let mut mpp = DMatrix::zeros(k, k);
                let mut mpq = DVector::zeros(k);
                for (a, &ia) in passive.iter().enumerate() {
                    mpq[a] = cols[&ia].0.dot(&cols[&q].1);
                    for (b, &ib) in passive.iter().enumerate() {
                        mpp[(a, b)] = cols[&ia].0.dot(&cols[&ib].1);
                    }
                }
                let c = mpp
                    .cholesky()
                    .ok_or_else(|| Error::SingularNormalMatrix("dependent working set".into()))?;
                c.solve(&mpq)
            };
            let z = m_qq
                - cols[&q]
                    .0
                    .dot(&(0..k).fold(DVector::zeros(dim), |acc, a| acc + &cols[&passive[a]].1 * d[a]));
            let r = residual(&x, &rows[q]);
            let full = if z > eps * m_qq { Some(-r / z) } else { None };
            let mut partial: Option<(usize, T)> = None;
            for a in 0..k {
                if d[a] > T::zero() {
                    let t = mu[a] / d[a];
                    if partial.is_none_or(|(_, p)| t < p) {
                        partial = Some((a, t));
                    }
                }
            }
            let (t, drop) = match (full, partial) {
                (None, None) => return Err(fail(&x, -r, iterations)),
                (Some(f), Some((a, p))) if p < f => (p, Some(a)),
                (Some(f), _) => (f, None),
                (None, Some((a, p))) => (p, Some(a)),
            };
            for a in 0..k {
                mu[a] -= t * d[a];
            }
            t_q += t;
            if let Some(a) = drop {
                passive.remove(a);
                mu.remove(a);
            } else {
                passive.push(q);
                mu.push(t_q);
            }
            x = x_u.clone();
            for (a, &i) in passive.iter().enumerate() {
                x.axpy(mu[a], &cols[&i].1, T::one());
            }
            if drop.is_none() {
                break;
            }
            x.axpy(t_q, &cols[&q].1, T::one());
        }
    }
}

/// Solve one window from scratch (no factorization cache).
pub fn solve_horizon<T: Real>(
    model: &DiscreteModel<T>,
    buffer: &HorizonBuffer<T>,
    weights: &HorizonWeights<T>,
    constraints: Option<&OutputConstraints<T>>,
    settings: &SolverSettings,
) -> Result<HorizonSolution<T>> {
    let mut solver = HorizonSolver::new(model.clone(), weights.clone(), constraints.cloned(), *settings)?;
    solver.solve(buffer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model(a: f64, b: f64, c: f64) -> DiscreteModel<f64> {
        DiscreteModel {
            ad: DMatrix::from_element(1, 1, a),
            bd: DMatrix::from_element(1, 1, b),
            c: DMatrix::from_element(1, 1, c),
            d: DMatrix::zeros(1, 1),
            dt: 1.0,
        }
    }

    fn filled(ys: &[f64], prior: f64, horizon: usize) -> HorizonBuffer<f64> {
        let mut b = HorizonBuffer::new(horizon, DVector::from_element(1, prior));
        for y in ys {
            b.push(DVector::from_element(1, *y), DVector::zeros(1));
        }
        b
    }

    #[test]
    fn buffer_keeps_last_w() {
        let b = filled(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.0, 3);
        assert_eq!(b.len(), 3);
        assert_eq!(b.step(), 5);
        let ys: Vec<f64> = b.measurements().iter().map(|v| v[0]).collect();
        assert_eq!(ys, vec![3.0, 4.0, 5.0]);
    }

    #[test]
    fn three_step_scalar_window() {
        // oracle: explicit 3x3 normal equations written out by hand
        let (a, lam) = (0.9, 1.0);
        let ys = [1.0, 0.9, 0.8];
        let h = DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0 + a * a + lam,
                -a,
                0.0,
                -a,
                1.0 + a * a + 1.0,
                -a,
                0.0,
                -a,
                1.0 + 1.0,
            ],
        );
        let g = DVector::from_row_slice(&[ys[0] + lam * 1.0, ys[1], ys[2]]);
        let want = h.lu().solve(&g).unwrap();
        let w = HorizonWeights::from_diagonals(&[1.0], &[1.0], lam, 3).unwrap();
        let sol = solve_horizon(
            &scalar_model(a, 0.0, 1.0),
            &filled(&ys, 1.0, 3),
            &w,
            None,
            &SolverSettings::default(),
        )
        .unwrap();
        for j in 0..3 {
            assert!((sol.states[j][0] - want[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let w = HorizonWeights::from_diagonals(&[1.0], &[0.1], 1.0, 4).unwrap();
        let sol = solve_horizon(
            &scalar_model(0.7, 1.0, 2.0),
            &filled(&[0.0; 4], 0.0, 4),
            &w,
            None,
            &SolverSettings::default(),
        )
        .unwrap();
        assert!(sol.states.iter().all(|z| z[0] == 0.0));
    }

    #[test]
    fn lower_bound_is_enforced() {
        let model = scalar_model(1.0, 0.0, 1.0);
        let cons = OutputConstraints {
            c: DMatrix::from_element(1, 1, 1.0),
            d: DMatrix::zeros(1, 1),
            lower: vec![Some(0.0)],
            upper: vec![None],
        };
        let w = HorizonWeights::from_diagonals(&[1.0], &[1.0], 1.0, 3).unwrap();
        let buf = filled(&[-1.0, -2.0, 0.5], 0.0, 3);
        let sol = solve_horizon(&model, &buf, &w, Some(&cons), &SolverSettings::default()).unwrap();
        assert!(sol.active_constraints > 0);
        for z in &sol.states {
            assert!(z[0] >= -1e-12, "{}", z[0]);
        }
        let free = solve_horizon(&model, &buf, &w, None, &SolverSettings::default()).unwrap();
        assert!(free.states[0][0] < 0.0);
    }

    #[test]
    fn iteration_cap_reports_last_iterate() {
        let model = scalar_model(1.0, 0.0, 1.0);
        let cons = OutputConstraints {
            c: DMatrix::from_element(1, 1, 1.0),
            d: DMatrix::zeros(1, 1),
            lower: vec![Some(0.0)],
            upper: vec![None],
        };
        let w = HorizonWeights::from_diagonals(&[1.0], &[1.0], 1.0, 3).unwrap();
        let settings = SolverSettings {
            tolerance: 1e-9,
            max_iterations: 1,
        };
        let err = solve_horizon(&model, &filled(&[-1.0, -2.0, -3.0], 0.0, 3), &w, Some(&cons), &settings).unwrap_err();
        match err {
            Error::NonConvergence { last_iterate, .. } => assert_eq!(last_iterate.len(), 3),
            other => panic!("unexpected {other}"),
        }
    }
}
