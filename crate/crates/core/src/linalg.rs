//! Dense complex matrix kernels for the matrix groups.
//!
//! Everything here works on small square matrices (dimension at most a few
//! dozen), so the routines favour robustness over asymptotic speed.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Complex square matrix, stored column-major by nalgebra.
pub type CMat = DMatrix<Complex64>;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

/// Relative change in the Ritz value below which power iteration stops.
pub const POWER_ITERATION_TOL: f64 = 1e-13;
const POWER_ITERATION_CAP: usize = 20_000;
const START_SEED: u64 = 0x6c69_7067_656f_6d31;

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `‖m* m − I‖_F`, the drift of `m` away from the unitary group.
pub fn unitarity_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let g = m.adjoint() * m;
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { C1 } else { C0 };
            acc += (g[(i, j)] - target).norm_sqr();
        }
    }
    acc.sqrt()
}

/// Largest singular value of `m`.
///
/// Runs a block power iteration on `m* m` (block width two, which makes a
/// nearly degenerate top pair converge as fast as a well separated one) from
/// a fixed pseudo-random start, stopping once the Ritz value moves by less
/// than [`POWER_ITERATION_TOL`] relative.
pub fn operator_norm(m: &CMat) -> Result<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "operator_norm needs a square matrix");
    if n == 0 {
        return Ok(0.0);
    }
    if n == 1 {
        return Ok(m[(0, 0)].norm());
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let a = m.map(|z| z / scale);
    let h = a.adjoint() * &a;

    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut u: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    orthonormalize(&mut u, &mut v);

    let mut prev = f64::NAN;
    for _ in 0..POWER_ITERATION_CAP {
        let hu = matvec(&h, &u);
        let hv = matvec(&h, &v);
        let ritz = top_ritz(&u, &v, &hu, &hv);
        if prev.is_finite() && (ritz - prev).abs() <= POWER_ITERATION_TOL * ritz.max(f64::MIN_POSITIVE) {
            return Ok(ritz.max(0.0).sqrt() * scale);
        }
        prev = ritz;
        u = hu;
        v = hv;
        if !orthonormalize(&mut u, &mut v) {
            // h has rank one on the current block; the Ritz value is exact.
            let hu = matvec(&h, &u);
            let r = dot(&u, &hu).re;
            return Ok(r.max(0.0).sqrt() * scale);
        }
    }
    Err(Error::NonConvergence {
        iterations: POWER_ITERATION_CAP,
    })
}

/// Operator norm with a fallback to a dense Hermitian eigensolve when power
/// iteration fails to converge.
pub fn operator_norm_robust(m: &CMat) -> f64 {
    operator_norm(m).unwrap_or_else(|_| operator_norm_dense(m))
}

/// Operator norm from a dense eigendecomposition of `m* m`.
pub fn operator_norm_dense(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let h = m.adjoint() * m;
    let eig = nalgebra::SymmetricEigen::new(h);
    eig.eigenvalues.iter().cloned().fold(0.0, f64::max).sqrt()
}

fn matvec(h: &CMat, x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let mut out = vec![C0; n];
    for j in 0..n {
        let xj = x[j];
        for i in 0..n {
            out[i] += h[(i, j)] * xj;
        }
    }
    out
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn normalize(x: &mut [Complex64]) -> bool {
    let nrm = dot(x, x).re.sqrt();
    if nrm <= f64::MIN_POSITIVE * 1e10 {
        return false;
    }
    for z in x.iter_mut() {
        *z /= nrm;
    }
    true
}

/// Gram-Schmidt on the pair; returns false when `v` collapses onto `u`.
fn orthonormalize(u: &mut [Complex64], v: &mut [Complex64]) -> bool {
    if !normalize(u) {
        u.swap_with_slice(v);
        if !normalize(u) {
            return false;
        }
    }
    let before = dot(v, v).re.sqrt();
    for _ in 0..2 {
        let c = dot(u, v);
        for (vi, ui) in v.iter_mut().zip(u.iter()) {
            *vi -= c * ui;
        }
    }
    // a residual at rounding level is noise along u, not a second direction
    if dot(v, v).re.sqrt() <= 1e-10 * before {
        return false;
    }
    normalize(v)
}

/// Largest eigenvalue of the 2x2 Hermitian projection onto span{u, v}.
fn top_ritz(u: &[Complex64], v: &[Complex64], hu: &[Complex64], hv: &[Complex64]) -> f64 {
    let a = dot(u, hu).re;
    let d = dot(v, hv).re;
    let b = dot(u, hv);
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    mean + (half * half + b.norm_sqr()).sqrt()
}

/// Matrix exponential (scaling and squaring with a Padé approximant).
pub fn expm(a: &CMat) -> CMat {
    a.clone().exp()
}

fn inverse(m: &CMat) -> Result<CMat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericFailure("singular matrix in square-root iteration".into()))
}

/// Principal square root by the Denman–Beavers iteration.
///
/// Converges for matrices with no eigenvalues on the closed negative real
/// axis; the result is checked against `‖Y² − A‖ ≤ tol·max(1, ‖A‖)`.
pub fn sqrtm_denman_beavers(a: &CMat, tol: f64) -> Result<CMat> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = identity(n);
    for _ in 0..100 {
        let yi = inverse(&y)?;
        let zi = inverse(&z)?;
        let y_next = (&y + zi) * Complex64::new(0.5, 0.0);
        let z_next = (&z + yi) * Complex64::new(0.5, 0.0);
        let step = frobenius(&(&y_next - &y));
        let size = frobenius(&y_next);
        y = y_next;
        z = z_next;
        if step <= 1e-15 * size.max(1.0) {
            break;
        }
    }
    check_root(a, y, tol)
}

/// Principal square root through a complex Schur form and the triangular
/// recurrence `r_ij = (t_ij − Σ r_ik r_kj) / (r_ii + r_jj)`.
pub fn sqrtm_schur(a: &CMat, tol: f64) -> Result<CMat> {
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    let (q, t) = Schur::new(a.clone()).unpack();
    let mut r = CMat::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = principal_sqrt(t[(i, i)]);
    }
    for d in 1..n {
        for i in 0..n - d {
            let j = i + d;
            let mut s = t[(i, j)];
            for k in i + 1..j {
                s -= r[(i, k)] * r[(k, j)];
            }
            let den = r[(i, i)] + r[(j, j)];
            if den.norm() < 1e-300 {
                return Err(Error::NumericFailure(
                    "square root does not exist (coalescing eigenvalues at a branch cut)".into(),
                ));
            }
            r[(i, j)] = s / den;
        }
    }
    let root = &q * r * q.adjoint();
    check_root(a, root, tol)
}

/// Eigenvalues from the diagonal of a complex Schur form.
pub fn eigenvalues(a: &CMat) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let (_, t) = Schur::new(a.clone()).unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// `max |arg λ|` over the eigenvalues of a unitary matrix, i.e. `‖log u‖`
/// for the principal logarithm.
pub fn spectral_angle(u: &CMat) -> f64 {
    eigenvalues(u)
        .into_iter()
        .map(|z| z.im.atan2(z.re).abs())
        .fold(0.0, f64::max)
}

fn principal_sqrt(z: Complex64) -> Complex64 {
    let w = z.sqrt();
    if w.re < 0.0 {
        -w
    } else {
        w
    }
}

fn check_root(a: &CMat, y: CMat, tol: f64) -> Result<CMat> {
    let resid = frobenius(&(&y * &y - a));
    if !resid.is_finite() || resid > tol * frobenius(a).max(1.0) {
        return Err(Error::NumericFailure(format!(
            "square-root residual {resid:.3e} above tolerance {tol:.1e}"
        )));
    }
    Ok(y)
}

/// Principal square root: Denman–Beavers first, Schur recurrence as fallback.
pub fn sqrtm(a: &CMat, tol: f64) -> Result<CMat> {
    sqrtm_denman_beavers(a, tol).or_else(|_| sqrtm_schur(a, tol))
}

/// Principal logarithm by inverse scaling and squaring.
///
/// Square roots are taken until `‖A − I‖_F ≤ 1/4`, then the Mercator series
/// of `log(I + X)` is summed to machine precision and rescaled by `2^s`.
pub fn logm(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let id = identity(n);
    let mut m = a.clone();
    let mut s = 0u32;
    while frobenius(&(&m - &id)) > 0.25 {
        if s > 60 {
            return Err(Error::NumericFailure("logarithm scaling did not reach identity".into()));
        }
        m = sqrtm(&m, 1e-10)?;
        s += 1;
    }
    let x = &m - &id;
    let mut term = x.clone();
    let mut acc = CMat::zeros(n, n);
    for k in 1..200 {
        let coef = if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
        acc += &term * Complex64::new(coef, 0.0);
        if frobenius(&term) / (k as f64) < 1e-18 {
            break;
        }
        term = &term * &x;
    }
    Ok(acc * Complex64::new(2f64.powi(s as i32), 0.0))
}

/// Nearest unitary matrix (polar factor) by the Newton iteration
/// `X ← (X + X^{-*}) / 2`.
pub fn polar_unitary(m: &CMat) -> CMat {
    let mut x = m.clone();
    for _ in 0..30 {
        let inv = match x.clone().try_inverse() {
            Some(inv) => inv,
            None => return x,
        };
        let next = (&x + inv.adjoint()) * Complex64::new(0.5, 0.0);
        let step = frobenius(&(&next - &x));
        x = next;
        if step < 1e-15 {
            break;
        }
    }
    x
}

/// Random skew-Hermitian matrix with unit operator norm.
pub fn random_skew_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let a = (&g - g.adjoint()) * Complex64::new(0.5, 0.0);
    normalize_op(a)
}

/// Random real skew-symmetric matrix with unit operator norm (as a complex matrix).
pub fn random_skew_symmetric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let a = (&g - g.transpose()) * 0.5;
    normalize_op(a.map(|x| Complex64::new(x, 0.0)))
}

/// Random diagonal skew-Hermitian matrix with unit operator norm.
pub fn random_diagonal_skew<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let mut a = CMat::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = Complex64::new(0.0, rng.sample(StandardNormal));
    }
    normalize_op(a)
}

/// Random complex matrix with unit operator norm.
pub fn random_complex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    normalize_op(g)
}

fn normalize_op(a: CMat) -> CMat {
    let nrm = operator_norm_robust(&a);
    if nrm == 0.0 {
        a
    } else {
        a * Complex64::new(1.0 / nrm, 0.0)
    }
}

/// Haar-distributed unitary via QR of a complex Gaussian matrix.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C1 };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}
