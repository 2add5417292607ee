//! Dense matrix helpers that nalgebra does not provide directly: matrix
//! exponential and logarithm, eigenvalue reflection, numerical rank.

use nalgebra::{Complex, DMatrix, DVector};

use crate::{Error, Real, Result};

fn norm1<T: Real>(a: &DMatrix<T>) -> T {
    let mut best = T::zero();
    for col in a.column_iter() {
        let s = col.iter().fold(T::zero(), |acc, v| acc + v.abs());
        if s > best {
            best = s;
        }
    }
    best
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let half = T::lit(0.5);
    let mut squarings = 0u32;
    let mut scaled = a.clone();
    while norm1(&scaled) > half {
        scaled *= half;
        squarings += 1;
        if squarings > 1000 {
            break;
        }
    }
    let mut result = DMatrix::<T>::identity(n, n);
    let mut term = DMatrix::<T>::identity(n, n);
    for k in 1..=30 {
        term = &term * &scaled * T::lit(1.0 / k as f64);
        result += &term;
        if norm1(&term) <= T::default_epsilon() * norm1(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Principal square root by the Denman-Beavers iteration.
fn sqrtm<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<T>::identity(n, n);
    let half = T::lit(0.5);
    for _ in 0..100 {
        let y_inv = y
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Identification("singular iterate in matrix square root".into()))?;
        let z_inv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Identification("singular iterate in matrix square root".into()))?;
        let y_next = (&y + z_inv) * half;
        let z_next = (&z + y_inv) * half;
        let delta = norm1(&(&y_next - &y));
        y = y_next;
        z = z_next;
        if delta <= T::lit(10.0) * T::default_epsilon() * norm1(&y) {
            return Ok(y);
        }
    }
    Ok(y)
}

const SCHUR_MAX_ITER: usize = 10_000;

/// Real Schur form `a = q t q'` with a capped QR iteration. When the
/// iteration stalls it is retried once on a fixed orthogonal similarity.
pub fn real_schur<T: Real>(a: &DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension("Schur form needs a square matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Identification("non-finite entry in matrix".into()));
    }
    if let Some(s) = a.clone().try_schur(T::default_epsilon(), SCHUR_MAX_ITER) {
        return Ok(s.unpack());
    }
    let m = DMatrix::<T>::from_fn(n, n, |i, j| {
        T::lit(((7 * i + 13 * j + 1) as f64).sin()) + if i == j { T::lit(2.0) } else { T::zero() }
    });
    let p = m.qr().q();
    let rotated = p.transpose() * a * &p;
    let s = rotated
        .try_schur(T::default_epsilon(), SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Identification("Schur iteration did not converge".into()))?;
    let (q, t) = s.unpack();
    Ok((p * q, t))
}

/// Eigenvalues read off the quasi-triangular Schur factor.
pub fn eigenvalues<T: Real>(a: &DMatrix<T>) -> Result<Vec<Complex<T>>> {
    let (_, t) = real_schur(a)?;
    let n = t.nrows();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != T::zero() {
            let (p, q, r, s) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let half = T::lit(0.5);
            let mid = (p + s) * half;
            let disc = (p - s) * (p - s) * half * half + q * r;
            if disc >= T::zero() {
                let w = disc.sqrt();
                out.push(Complex::new(mid + w, T::zero()));
                out.push(Complex::new(mid - w, T::zero()));
            } else {
                let w = (-disc).sqrt();
                out.push(Complex::new(mid, w));
                out.push(Complex::new(mid, -w));
            }
            i += 2;
        } else {
            out.push(Complex::new(t[(i, i)], T::zero()));
            i += 1;
        }
    }
    Ok(out)
}

/// True when some eigenvalue lies on the closed negative real axis, where no
/// real principal logarithm exists.
pub fn has_nonpositive_real_eigenvalue<T: Real>(a: &DMatrix<T>) -> Result<bool> {
    let scale = norm1(a).max(T::one());
    let tol = T::lit(1e3) * T::default_epsilon() * scale;
    Ok(eigenvalues(a)?.iter().any(|l| l.im.abs() <= tol && l.re <= tol))
}

/// Principal real matrix logarithm by inverse scaling and squaring.
pub fn logm<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension("logm needs a square matrix".into()));
    }
    if has_nonpositive_real_eigenvalue(a)? {
        return Err(Error::Identification(
            "matrix has an eigenvalue on the non-positive real axis; no real logarithm".into(),
        ));
    }
    let eye = DMatrix::<T>::identity(n, n);
    let mut x = a.clone();
    let mut roots = 0i32;
    while norm1(&(&x - &eye)) > T::lit(0.25) {
        x = sqrtm(&x)?;
        roots += 1;
        if roots > 64 {
            return Err(Error::Identification("matrix logarithm did not converge".into()));
        }
    }
    // log X = 2 atanh(Z), Z = (X - I)(X + I)^-1
    let plus_inv = (&x + &eye)
        .try_inverse()
        .ok_or_else(|| Error::Identification("singular X + I in matrix logarithm".into()))?;
    let zm = (&x - &eye) * plus_inv;
    let z2 = &zm * &zm;
    let mut term = zm.clone();
    let mut sum = zm;
    for j in 1..60 {
        term = &term * &z2;
        let contrib = &term * T::lit(1.0 / (2 * j + 1) as f64);
        let small = norm1(&contrib) <= T::default_epsilon() * norm1(&sum);
        sum += contrib;
        if small {
            break;
        }
    }
    Ok(sum * T::lit(2.0 * 2f64.powi(roots)))
}

/// Reflect eigenvalues with positive real part to `-|Re|`, keeping imaginary
/// parts. Works on the real Schur form so no eigenvectors are needed.
/// Returns the new matrix and the number of eigenvalues that were moved.
pub fn reflect_unstable<T: Real>(a: &DMatrix<T>) -> Result<(DMatrix<T>, usize)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((a.clone(), 0));
    }
    let (q, mut t) = real_schur(a)?;
    let scale = norm1(a).max(T::one());
    let tol = T::lit(1e2) * T::default_epsilon() * scale;
    let mut moved = 0;
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > tol {
            let re = (t[(i, i)] + t[(i + 1, i + 1)]) * T::lit(0.5);
            if re > T::zero() {
                let shift = re + re;
                t[(i, i)] -= shift;
                t[(i + 1, i + 1)] -= shift;
                moved += 2;
            }
            i += 2;
        } else {
            if t[(i, i)] > T::zero() {
                t[(i, i)] = -t[(i, i)];
                moved += 1;
            }
            i += 1;
        }
    }
    if moved == 0 {
        return Ok((a.clone(), 0));
    }
    Ok((&q * t * q.transpose(), moved))
}

/// Mirror eigenvalues outside the unit circle to `l / |l|^2`, the discrete
/// counterpart of reflecting a continuous pole across the imaginary axis.
pub fn reflect_outside_unit_disk<T: Real>(a: &DMatrix<T>) -> Result<(DMatrix<T>, usize)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((a.clone(), 0));
    }
    let (q, mut t) = real_schur(a)?;
    let mut moved = 0;
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != T::zero() {
            let det = t[(i, i)] * t[(i + 1, i + 1)] - t[(i, i + 1)] * t[(i + 1, i)];
            let disc = {
                let h = (t[(i, i)] - t[(i + 1, i + 1)]) * T::lit(0.5);
                h * h + t[(i, i + 1)] * t[(i + 1, i)]
            };
            if disc < T::zero() && det > T::one() {
                // complex pair of modulus r = sqrt(det): scale the block by 1/r^2
                let inv = T::one() / det;
                for r in i..i + 2 {
                    for c in i..n {
                        t[(r, c)] *= inv;
                    }
                }
                moved += 2;
            } else if disc >= T::zero() {
                // real pair left in an unsplit block
                let b = t.view((i, i), (2, 2)).into_owned();
                if let Some(nb) = reflect_real_block(&b, disc.sqrt()) {
                    for r in 0..2 {
                        for c in 0..2 {
                            t[(i + r, i + c)] = nb[(r, c)];
                        }
                    }
                    moved += 2;
                }
            }
            i += 2;
        } else {
            let l = t[(i, i)];
            if l.abs() > T::one() {
                t[(i, i)] = T::one() / l;
                moved += 1;
            }
            i += 1;
        }
    }
    if moved == 0 {
        return Ok((a.clone(), 0));
    }
    Ok((&q * t * q.transpose(), moved))
}

/// Reflect the eigenvalues of a 2x2 block with real eigenvalues
/// `mid +- w`; `None` when both are already inside the unit disk.
fn reflect_real_block<T: Real>(b: &DMatrix<T>, w: T) -> Option<DMatrix<T>> {
    let mid = (b[(0, 0)] + b[(1, 1)]) * T::lit(0.5);
    let (l1, l2) = (mid + w, mid - w);
    let f = |l: T| if l.abs() > T::one() { T::one() / l } else { l };
    if f(l1) == l1 && f(l2) == l2 {
        return None;
    }
    if w <= T::default_epsilon() * (T::one() + mid.abs()) {
        // (near-)repeated eigenvalue: uniform scaling maps l to 1/l
        return Some(b * (T::one() / (mid * mid)));
    }
    // p(B) interpolating f at l1, l2
    let slope = (f(l1) - f(l2)) / (l1 - l2);
    let eye = DMatrix::<T>::identity(2, 2);
    Some((b - &eye * l2) * slope + eye * f(l2))
}

/// Largest real part over the eigenvalues of `a`.
pub fn spectral_abscissa<T: Real>(a: &DMatrix<T>) -> Result<T> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|l| l.re)
        .reduce(|acc, v| if v > acc { v } else { acc })
        .unwrap_or_else(T::zero))
}

/// Largest eigenvalue modulus of `a`.
pub fn spectral_radius<T: Real>(a: &DMatrix<T>) -> Result<T> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|l| (l.re * l.re + l.im * l.im).sqrt())
        .fold(T::zero(), |acc, v| if v > acc { v } else { acc }))
}

const SVD_MAX_ITER: usize = 10_000;

/// SVD with a capped iteration count; non-finite input is rejected instead of
/// iterating forever.
pub fn svd_capped<T: Real>(a: &DMatrix<T>, u: bool, v: bool) -> Result<nalgebra::SVD<T, nalgebra::Dyn, nalgebra::Dyn>> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Identification("non-finite entry in matrix".into()));
    }
    a.clone()
        .try_svd(u, v, T::default_epsilon(), SVD_MAX_ITER)
        .ok_or_else(|| Error::Identification("SVD did not converge".into()))
}

/// Singular values in decreasing order (NaN when the SVD fails).
pub fn singular_values<T: Real>(a: &DMatrix<T>) -> DVector<T> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let mut sv = match svd_capped(a, false, false) {
        Ok(svd) => svd.singular_values,
        Err(_) => return DVector::from_element(a.nrows().min(a.ncols()), T::lit(f64::NAN)),
    };
    let mut v: Vec<T> = sv.iter().copied().collect();
    v.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    for (dst, src) in sv.iter_mut().zip(v) {
        *dst = src;
    }
    sv
}

/// Numerical rank: singular values above `rel_tol * sigma_max`.
pub fn rank_with_tol<T: Real>(sv: &DVector<T>, rel_tol: T) -> usize {
    let smax = sv.iter().copied().fold(T::zero(), |a, b| a.max(b));
    if smax <= T::zero() {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * smax).count()
}

/// Moore-Penrose pseudo-inverse with a relative singular value cutoff.
pub fn pinv<T: Real>(a: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let Ok(svd) = svd_capped(a, true, true) else {
        return DMatrix::from_element(a.ncols(), a.nrows(), T::lit(f64::NAN));
    };
    let smax = svd.singular_values.iter().copied().fold(T::zero(), |x, y| x.max(y));
    let cutoff = rel_tol * smax;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > T::zero() {
            let vk = vt.row(k).transpose();
            let uk = u.column(k);
            out += (vk * uk.transpose()) * (T::one() / s);
        }
    }
    out
}

/// Least-squares solution of `a x = b` (minimum norm when rank deficient).
pub fn lstsq<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    pinv(a, T::lit(1e-12)) * b
}
