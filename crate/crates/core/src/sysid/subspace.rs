use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::hankel::build_block_hankel;
use super::state_space::{Conversion, StateSpace};
use crate::linalg::{
    expm, logm, lstsq, pinv, reflect_outside_unit_disk, reflect_unstable, spectral_radius, svd_capped,
};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentificationConfig {
    /// State dimension of each node model.
    pub order: usize,
    /// Block rows of the past and of the future Hankel matrices.
    pub hankel_rows: usize,
    /// Estimate a direct feedthrough term; otherwise D is zero.
    pub feedthrough: bool,
    /// Reflect right half-plane eigenvalues of the continuous model.
    pub enforce_stability: bool,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        Self {
            order: 2,
            hankel_rows: 10,
            feedthrough: false,
            enforce_stability: true,
        }
    }
}

impl IdentificationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 || self.hankel_rows <= self.order {
            return Err(Error::Config(format!(
                "identification needs hankel_rows > order >= 1 (got order {}, rows {})",
                self.order, self.hankel_rows
            )));
        }
        Ok(())
    }
}

/// Discrete quadruple as identified, before conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteQuadruple<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    /// Estimated initial state of each segment.
    pub initial_states: Vec<DVector<T>>,
    /// Singular values of the projected data, largest first.
    pub singular_values: Vec<T>,
}

/// Smallest admissible `sigma_n / sigma_1`.
const RANK_RATIO: f64 = 1e-10;

fn full_segments(len: usize, segments: &[Range<usize>]) -> Vec<Range<usize>> {
    if segments.is_empty() {
        vec![0..len]
    } else {
        segments.to_vec()
    }
}

/// Discrete subspace identification:
/// 1. past/future block-Hankel matrices of inputs and outputs;
/// 2. oblique projection of future outputs onto past data along future
///    inputs, through the triangular factor of the stacked data;
/// 3. SVD of the projection; extended observability from the leading
///    `order` left singular vectors;
/// 4. `C` from the first block row, `A` from shift invariance;
/// 5. `B`, `D` and per-segment initial states by linear least squares on
///    the simulated response.
pub fn subspace_identify_discrete<T: Real>(
    u: &DMatrix<T>,
    y: &DMatrix<T>,
    segments: &[Range<usize>],
    cfg: &IdentificationConfig,
) -> Result<DiscreteQuadruple<T>> {
    cfg.validate()?;
    if u.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "u has {} samples, y has {}",
            u.nrows(),
            y.nrows()
        )));
    }
    if u.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Identification("non-finite samples in the data".into()));
    }
    let segs = full_segments(u.nrows(), segments);
    let (m, p, n, s) = (u.ncols(), y.ncols(), cfg.order, cfg.hankel_rows);

    let hu = build_block_hankel(u, 2 * s, &segs)?;
    let hy = build_block_hankel(y, 2 * s, &segs)?;
    let k = hu.ncols();
    let (r1, r2, r3) = (s * m, s * (m + p), s * p);
    let rows = r1 + r2 + r3;
    if k < rows {
        return Err(Error::Identification(format!(
            "only {k} Hankel columns for {rows} stacked rows; need longer records"
        )));
    }
    // stacked [U_f; U_p; Y_p; Y_f]
    let mut z = DMatrix::zeros(rows, k);
    z.view_mut((0, 0), (r1, k)).copy_from(&hu.rows(s * m, s * m));
    z.view_mut((r1, 0), (s * m, k)).copy_from(&hu.rows(0, s * m));
    z.view_mut((r1 + s * m, 0), (s * p, k)).copy_from(&hy.rows(0, s * p));
    z.view_mut((r1 + r2, 0), (r3, k)).copy_from(&hy.rows(s * p, s * p));
    // Z = L Q^T with L lower triangular
    let l = z.transpose().qr().r().transpose();
    let l21 = l.view((r1, 0), (r2, r1));
    let l22 = l.view((r1, r1), (r2, r2)).into_owned();
    let l32 = l.view((r1 + r2, r1), (r3, r2));
    let mut wp = DMatrix::zeros(r2, r1 + r2);
    wp.view_mut((0, 0), (r2, r1)).copy_from(&l21);
    wp.view_mut((0, r1), (r2, r2)).copy_from(&l22);
    let oblique = l32 * pinv(&l22, T::lit(1e-12)) * wp;

    let svd = svd_capped(&oblique, true, false)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sv: Vec<T> = order.iter().map(|&i| svd.singular_values[i]).collect();
    if sv.len() < n {
        return Err(Error::Identification(
            "fewer singular values than the model order".into(),
        ));
    }
    let ratio = if sv[0] > T::zero() {
        sv[n - 1] / sv[0]
    } else {
        T::zero()
    };
    if !(ratio > T::lit(RANK_RATIO)) {
        return Err(Error::Identification(format!(
            "rank deficient projection: sigma_{n}/sigma_1 = {ratio:e} (data not exciting enough for order {n})"
        )));
    }
    let uvec = svd.u.as_ref().expect("u requested");
    let mut gamma = DMatrix::zeros(s * p, n);
    for (j, &i) in order.iter().take(n).enumerate() {
        let scaled = uvec.column(i) * sv[j].sqrt();
        gamma.column_mut(j).copy_from(&scaled);
    }
    let c = gamma.rows(0, p).into_owned();
    let mut a = lstsq(
        &gamma.rows(0, (s - 1) * p).into_owned(),
        &gamma.rows(p, (s - 1) * p).into_owned(),
    );
    if cfg.enforce_stability {
        a = reflect_outside_unit_disk(&a)?.0;
    }

    let (b, d, x0s) = fit_input_matrices(&a, &c, u, y, &segs, cfg.feedthrough)?;
    Ok(DiscreteQuadruple {
        a,
        b,
        c,
        d,
        initial_states: x0s,
        singular_values: sv,
    })
}

type InputFit<T> = (DMatrix<T>, DMatrix<T>, Vec<DVector<T>>);

/// Least squares for `vec(B)`, `vec(D)` and one initial state per segment,
/// with `A`, `C` fixed. Regressors are the simulated responses to unit
/// entries of each unknown.
fn fit_input_matrices<T: Real>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    u: &DMatrix<T>,
    y: &DMatrix<T>,
    segs: &[Range<usize>],
    feedthrough: bool,
) -> Result<InputFit<T>> {
    let (n, m, p) = (a.nrows(), u.ncols(), c.nrows());
    let t_total: usize = segs.iter().map(|s| s.len()).sum();
    let n_b = n * m;
    let n_d = if feedthrough { p * m } else { 0 };
    let n_x = n * segs.len();
    let cols = n_b + n_d + n_x;
    let mut phi = DMatrix::zeros(t_total * p, cols);
    let mut rhs = DMatrix::zeros(t_total * p, 1);

    let mut row0 = 0;
    for (si, seg) in segs.iter().enumerate() {
        let len = seg.len();
        for t in 0..len {
            for o in 0..p {
                rhs[((row0 + t) * p + o, 0)] = y[(seg.start + t, o)];
            }
        }
        // B entries: state response to e_i u_j
        for i in 0..n {
            for j in 0..m {
                let col = i * m + j;
                let mut x = DVector::<T>::zeros(n);
                for t in 0..len {
                    let yo = c * &x;
                    for o in 0..p {
                        phi[((row0 + t) * p + o, col)] = yo[o];
                    }
                    x = a * &x;
                    x[i] += u[(seg.start + t, j)];
                }
            }
        }
        if feedthrough {
            for o in 0..p {
                for j in 0..m {
                    let col = n_b + o * m + j;
                    for t in 0..len {
                        phi[((row0 + t) * p + o, col)] = u[(seg.start + t, j)];
                    }
                }
            }
        }
        // initial state of this segment
        for i in 0..n {
            let col = n_b + n_d + si * n + i;
            let mut x = DVector::<T>::zeros(n);
            x[i] = T::one();
            for t in 0..len {
                let yo = c * &x;
                for o in 0..p {
                    phi[((row0 + t) * p + o, col)] = yo[o];
                }
                x = a * &x;
            }
        }
        row0 += len;
    }
    // column equilibration keeps the cutoff meaningful across mixed units
    let mut scale = vec![T::one(); cols];
    for (j, sc) in scale.iter_mut().enumerate() {
        let nrm = phi.column(j).norm();
        if nrm > T::zero() {
            *sc = nrm;
            let inv = T::one() / nrm;
            phi.column_mut(j).scale_mut(inv);
        }
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Identification(
            "simulated regressors overflow: identified dynamics are unstable".into(),
        ));
    }
    let theta = lstsq(&phi, &rhs);
    let coef = |j: usize| theta[(j, 0)] / scale[j];
    let b = DMatrix::from_fn(n, m, |i, j| coef(i * m + j));
    let d = if feedthrough {
        DMatrix::from_fn(p, m, |o, j| coef(n_b + o * m + j))
    } else {
        DMatrix::zeros(p, m)
    };
    let x0s = (0..segs.len())
        .map(|si| DVector::from_fn(n, |i, _| coef(n_b + n_d + si * n + i)))
        .collect();
    Ok((b, d, x0s))
}

/// Convert an identified discrete quadruple to continuous time.
pub(crate) fn to_continuous<T: Real>(
    q: &DiscreteQuadruple<T>,
    dt: T,
    enforce_stability: bool,
) -> Result<StateSpace<T>> {
    let n = q.a.nrows();
    let m = q.b.ncols();
    let (mut a, b, conversion) = match logm(&q.a) {
        Ok(log_a) => {
            let a = log_a / dt;
            // Phi1 = int_0^dt exp(A s) ds from the augmented exponential
            let mut aug = DMatrix::zeros(2 * n, 2 * n);
            aug.view_mut((0, 0), (n, n)).copy_from(&(&a * dt));
            aug.view_mut((0, n), (n, n))
                .copy_from(&(DMatrix::<T>::identity(n, n) * dt));
            let e = expm(&aug);
            let phi1 = e.view((0, n), (n, n)).into_owned();
            let euler_stable = || -> Result<bool> {
                let step = DMatrix::<T>::identity(n, n) + reflect_unstable(&a)?.0 * dt;
                Ok(spectral_radius(&step)? < T::one())
            };
            match phi1.clone().lu().solve(&q.b) {
                // a pole too fast for forward Euler at this step would make
                // the rollout diverge; keep the discrete model instead
                Some(b) if !enforce_stability || euler_stable()? => (a, b, Conversion::MatrixLog),
                _ => euler_inverse(q, dt),
            }
        }
        Err(_) => euler_inverse(q, dt),
    };
    debug_assert_eq!(b.ncols(), m);
    let mut reflected = 0;
    if enforce_stability {
        let (stable, moved) = reflect_unstable(&a)?;
        a = stable;
        reflected = moved;
    }
    Ok(StateSpace {
        a,
        b,
        c: q.c.clone(),
        d: q.d.clone(),
        dt,
        conversion,
        reflected_eigenvalues: reflected,
    })
}

fn euler_inverse<T: Real>(q: &DiscreteQuadruple<T>, dt: T) -> (DMatrix<T>, DMatrix<T>, Conversion) {
    let n = q.a.nrows();
    let a = (&q.a - DMatrix::<T>::identity(n, n)) / dt;
    let b = &q.b / dt;
    (a, b, Conversion::EulerFallback)
}

/// Identify a continuous-time model from sampled data (`u`: `T x m`,
/// `y`: `T x p`, sample time `dt`). An identically zero output yields the
/// zero model.
pub fn subspace_identify<T: Real>(
    u: &DMatrix<T>,
    y: &DMatrix<T>,
    segments: &[Range<usize>],
    cfg: &IdentificationConfig,
    dt: T,
) -> Result<StateSpace<T>> {
    cfg.validate()?;
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument("sample time must be positive".into()));
    }
    if y.iter().all(|v| *v == T::zero()) {
        let n = cfg.order;
        return Ok(StateSpace {
            a: DMatrix::<T>::identity(n, n) * (-T::one() / dt),
            b: DMatrix::zeros(n, u.ncols()),
            c: DMatrix::zeros(y.ncols(), n),
            d: DMatrix::zeros(y.ncols(), u.ncols()),
            dt,
            conversion: Conversion::ZeroOutput,
            reflected_eigenvalues: 0,
        });
    }
    let q = subspace_identify_discrete(u, y, segments, cfg)?;
    to_continuous(&q, dt, cfg.enforce_stability)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysid::state_space::{markov_of, rollout};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng))
    }

    fn scalar_cfg(order: usize) -> IdentificationConfig {
        IdentificationConfig {
            order,
            ..Default::default()
        }
    }

    #[test]
    fn scalar_system_markov() {
        let m = |v| DMatrix::from_element(1, 1, v);
        let u = white(2000, 1, 7);
        let y = rollout(&m(0.9), &m(1.0), &m(1.0), &m(0.0), &u, &DVector::zeros(1));
        let q = subspace_identify_discrete(&u, &y, &[], &scalar_cfg(1)).unwrap();
        let got = markov_of(&q.a, &q.b, &q.c, &q.d, 20);
        for (k, h) in got.iter().enumerate() {
            let want = if k == 0 { 0.0 } else { 0.9f64.powi(k as i32 - 1) };
            assert!(
                (h[(0, 0)] - want).abs() <= 1e-9 * want.max(1e-3),
                "k={k}: {}",
                h[(0, 0)]
            );
        }
    }

    #[test]
    fn order_above_true_order_is_rank_deficient() {
        let m = |v| DMatrix::from_element(1, 1, v);
        let u = white(500, 1, 8);
        let y = rollout(&m(0.9), &m(1.0), &m(1.0), &m(0.0), &u, &DVector::zeros(1));
        let err = subspace_identify_discrete(&u, &y, &[], &scalar_cfg(2)).unwrap_err();
        assert!(err.to_string().contains("rank deficient"), "{err}");
    }

    #[test]
    fn zero_output_gives_zero_model() {
        let u = white(300, 2, 9);
        let y = DMatrix::zeros(300, 1);
        let ss = subspace_identify(&u, &y, &[], &IdentificationConfig::default(), 1.0).unwrap();
        let sim = ss.simulate_euler(&u, &DVector::zeros(ss.order()), 1.0).unwrap();
        assert!(sim.norm() <= 1e-9);
        assert_eq!(ss.conversion, Conversion::ZeroOutput);
    }

    #[test]
    fn segments_with_nonzero_initial_states() {
        // second-order MISO system, two segments with different initial states
        let a = DMatrix::from_row_slice(2, 2, &[0.8, 0.2, -0.1, 0.7]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, -0.3]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.4]);
        let d = DMatrix::zeros(1, 2);
        let u1 = white(400, 2, 1);
        let u2 = white(400, 2, 2);
        let y1 = rollout(&a, &b, &c, &d, &u1, &DVector::from_vec(vec![3.0, -1.0]));
        let y2 = rollout(&a, &b, &c, &d, &u2, &DVector::from_vec(vec![-2.0, 0.5]));
        let mut u = DMatrix::zeros(800, 2);
        u.rows_mut(0, 400).copy_from(&u1);
        u.rows_mut(400, 400).copy_from(&u2);
        let mut y = DMatrix::zeros(800, 1);
        y.rows_mut(0, 400).copy_from(&y1);
        y.rows_mut(400, 400).copy_from(&y2);
        let q = subspace_identify_discrete(&u, &y, &[0..400, 400..800], &scalar_cfg(2)).unwrap();
        let want = markov_of(&a, &b, &c, &d, 20);
        let got = markov_of(&q.a, &q.b, &q.c, &q.d, 20);
        for (w, g) in want.iter().zip(&got) {
            assert!((w - g).abs().max() < 1e-8);
        }
        let sim = rollout(&q.a, &q.b, &q.c, &q.d, &u2, &q.initial_states[1]);
        assert!((sim - y2).abs().max() < 1e-8);
    }

    #[test]
    fn continuous_conversion_matches_zoh() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.6]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
        let q = DiscreteQuadruple {
            a: a.clone(),
            b: b.clone(),
            c: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            d: DMatrix::zeros(1, 1),
            initial_states: vec![],
            singular_values: vec![],
        };
        let ss = to_continuous::<f64>(&q, 0.5, true).unwrap();
        assert_eq!(ss.conversion, Conversion::MatrixLog);
        let (ad, bd) = ss.zoh(0.5);
        assert!((ad - a).abs().max() < 1e-12);
        assert!((bd - b).abs().max() < 1e-12);
    }

    #[test]
    fn negative_real_pole_falls_back() {
        let q = DiscreteQuadruple {
            a: DMatrix::from_element(1, 1, -0.5f64),
            b: DMatrix::from_element(1, 1, 1.0),
            c: DMatrix::from_element(1, 1, 1.0),
            d: DMatrix::zeros(1, 1),
            initial_states: vec![],
            singular_values: vec![],
        };
        let ss = to_continuous::<f64>(&q, 1.0, true).unwrap();
        assert_eq!(ss.conversion, Conversion::EulerFallback);
        assert!((ss.a[(0, 0)] + 1.5).abs() < 1e-12);
    }

    #[test]
    fn fast_pole_keeps_discrete_model() {
        // log(0.05) = -3.0: forward Euler at dt = 1 would map it to -2.0
        let q = DiscreteQuadruple {
            a: DMatrix::from_element(1, 1, 0.05f64),
            b: DMatrix::from_element(1, 1, 1.0),
            c: DMatrix::from_element(1, 1, 1.0),
            d: DMatrix::zeros(1, 1),
            initial_states: vec![],
            singular_values: vec![],
        };
        let ss = to_continuous::<f64>(&q, 1.0, true).unwrap();
        assert_eq!(ss.conversion, Conversion::EulerFallback);
        assert!((ss.a[(0, 0)] + 0.95).abs() < 1e-12);
        let raw = to_continuous::<f64>(&q, 1.0, false).unwrap();
        assert_eq!(raw.conversion, Conversion::MatrixLog);
    }

    #[test]
    fn unstable_pole_is_reflected() {
        let q = DiscreteQuadruple {
            a: DMatrix::from_element(1, 1, 1.2f64),
            b: DMatrix::from_element(1, 1, 1.0),
            c: DMatrix::from_element(1, 1, 1.0),
            d: DMatrix::zeros(1, 1),
            initial_states: vec![],
            singular_values: vec![],
        };
        let ss = to_continuous::<f64>(&q, 1.0, true).unwrap();
        assert_eq!(ss.reflected_eigenvalues, 1);
        assert!((ss.a[(0, 0)] + 1.2f64.ln()).abs() < 1e-12);
        let raw = to_continuous::<f64>(&q, 1.0, false).unwrap();
        assert!(raw.a[(0, 0)] > 0.0);
    }
}
