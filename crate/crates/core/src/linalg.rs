//! Small dense linear-algebra helpers on top of nalgebra.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Least-squares solution of `A X ≈ B` by column-equilibrated Householder QR.
///
/// Returns `None` when a column is zero or the equilibrated `R` has a
/// diagonal entry below `rcond` times its largest one.
pub fn least_squares_multi(a: &DMatrix<f64>, b: &DMatrix<f64>, rcond: f64) -> Option<DMatrix<f64>> {
    let (m, n) = a.shape();
    if n == 0 || m < n || b.nrows() != m {
        return None;
    }
    let mut scale = Vec::with_capacity(n);
    let mut scaled = a.clone();
    for j in 0..n {
        let norm = scaled.column(j).norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return None;
        }
        scaled.column_mut(j).scale_mut(1.0 / norm);
        scale.push(1.0 / norm);
    }
    let qr = scaled.qr();
    let r = qr.r();
    let diag_max = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..n).any(|i| r[(i, i)].abs() <= rcond * diag_max) {
        return None;
    }
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let top = qtb.rows(0, n).into_owned();
    let mut y = r.solve_upper_triangular(&top)?;
    for (j, s) in scale.iter().enumerate() {
        y.row_mut(j).scale_mut(*s);
    }
    Some(y)
}

pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> Option<DVector<f64>> {
    let rhs = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    least_squares_multi(a, &rhs, rcond).map(|x| x.column(0).into_owned())
}

/// Design matrix with columns `cos(2π f_k t), sin(2π f_k t)` per frequency.
pub fn tone_basis(times: &[f64], freqs: &[f64]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(times.len(), 2 * freqs.len());
    for (k, &f) in freqs.iter().enumerate() {
        for (n, &t) in times.iter().enumerate() {
            let (s, c) = (TAU * f * t).sin_cos();
            a[(n, 2 * k)] = c;
            a[(n, 2 * k + 1)] = s;
        }
    }
    a
}

/// `(a, b)` coefficients of `a cos θ + b sin θ` to `(amplitude, phase)` of
/// `A cos(θ + φ)`.
pub fn coeffs_to_amp_phase(a: f64, b: f64) -> (f64, f64) {
    (a.hypot(b), crate::signal::wrap_phase((-b).atan2(a)))
}

pub(crate) fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Leading left singular subspace of `h`.
#[derive(Debug, Clone)]
pub struct Subspace {
    /// `rows(h) × rank`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Leading singular values, descending; may hold more than `rank`.
    pub singular_values: Vec<f64>,
}

/// Randomized range finder with power iterations (fixed-seed test matrix).
///
/// Sketch width is `rank + oversample`. The result is a deterministic
/// function of `h`.
pub fn dominant_subspace(
    h: &DMatrix<f64>,
    rank: usize,
    oversample: usize,
    power_iters: usize,
) -> Subspace {
    let (l, m) = h.shape();
    let k = (rank + oversample).min(l).min(m);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    let omega = DMatrix::from_fn(m, k, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormalize(h * omega);
    for _ in 0..power_iters {
        let z = orthonormalize(h.tr_mul(&q));
        q = orthonormalize(h * z);
    }
    let small = q.tr_mul(h);
    let svd = small.svd(true, false);
    let u_small = svd.u.expect("requested U");
    let take = rank.min(u_small.ncols());
    let basis = &q * u_small.columns(0, take);
    Subspace {
        basis,
        singular_values: svd.singular_values.iter().copied().collect(),
    }
}

/// Full SVD path: left singular vectors (first `rank` kept later) and all
/// singular values.
pub fn full_subspace(h: &DMatrix<f64>) -> Subspace {
    let svd = h.clone().svd(true, false);
    Subspace {
        basis: svd.u.expect("requested U"),
        singular_values: svd.singular_values.iter().copied().collect(),
    }
}
