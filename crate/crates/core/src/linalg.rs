//! Minimal dense linear algebra: row-major matrices, SPD solves, a cyclic
//! Jacobi eigen-solver, and a Lanczos solver for the smallest eigenpairs of
//! large symmetric operators.
//!
//! Everything here is sequential and allocation-explicit so that results are
//! bitwise reproducible for fixed inputs.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math;
use crate::rng::{mix, rng};
use crate::{Error, Result};

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        DenseMat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline(always)]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline(always)]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline(always)]
    pub fn add_at(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    #[inline(always)]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline(always)]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.at(r, c)).collect()
    }

    pub fn transpose(&self) -> DenseMat {
        let mut t = DenseMat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.at(r, c));
            }
        }
        t
    }

    /// `self * other`.
    pub fn matmul(&self, other: &DenseMat) -> DenseMat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = DenseMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for (k, &aik) in a_row.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                let out_row = out.row_mut(i);
                for (j, &bkj) in b_row.iter().enumerate() {
                    out_row[j] += aik * bkj;
                }
            }
        }
        out
    }

    /// `selfᵀ * other` without materializing the transpose.
    pub fn transpose_matmul(&self, other: &DenseMat) -> DenseMat {
        assert_eq!(self.rows, other.rows, "transpose_matmul shape mismatch");
        let mut out = DenseMat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &aki) in a_row.iter().enumerate() {
                if aki == 0.0 {
                    continue;
                }
                let out_row = out.row_mut(i);
                for (j, &bkj) in b_row.iter().enumerate() {
                    out_row[j] += aki * bkj;
                }
            }
        }
        out
    }

    /// `self * x` into `out`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.iter()) {
                acc += a * b;
            }
            *o = acc;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &DenseMat, s: f64) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Frobenius inner product `<self, other>`.
    pub fn frobenius_dot(&self, other: &DenseMat) -> f64 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(math::abs(v)))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if math::abs(self.at(i, j) - self.at(j, i)) > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Cholesky factorization of a symmetric positive definite matrix; returns
/// the lower triangular factor.
pub fn cholesky(a: &DenseMat) -> Result<DenseMat> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::invalid("cholesky requires a square matrix"));
    }
    let mut l = DenseMat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.at(i, j);
            for k in 0..j {
                sum -= l.at(i, k) * l.at(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::invalid("matrix is not positive definite"));
                }
                l.set(i, j, math::sqrt(sum));
            } else {
                l.set(i, j, sum / l.at(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves `A X = B` for SPD `A` via Cholesky; `B` may have several columns.
pub fn solve_spd(a: &DenseMat, b: &DenseMat) -> Result<DenseMat> {
    let l = cholesky(a)?;
    let n = a.rows();
    assert_eq!(b.rows(), n, "solve_spd shape mismatch");
    let mut x = b.clone();
    // Forward substitution L y = b, column by column.
    for col in 0..x.cols() {
        for i in 0..n {
            let mut sum = x.at(i, col);
            for k in 0..i {
                sum -= l.at(i, k) * x.at(k, col);
            }
            x.set(i, col, sum / l.at(i, i));
        }
        // Back substitution Lᵀ x = y.
        for i in (0..n).rev() {
            let mut sum = x.at(i, col);
            for k in (i + 1)..n {
                sum -= l.at(k, i) * x.at(k, col);
            }
            x.set(i, col, sum / l.at(i, i));
        }
    }
    Ok(x)
}

/// Full eigendecomposition of a dense symmetric matrix by cyclic Jacobi
/// rotations. Returns eigenvalues in ascending order with matching
/// eigenvector columns.
pub fn jacobi_eigh(a: &DenseMat) -> (Vec<f64>, DenseMat) {
    let n = a.rows();
    assert_eq!(a.cols(), n, "jacobi_eigh requires a square matrix");
    let mut m = a.clone();
    let mut v = DenseMat::identity(n);
    if n <= 1 {
        let vals = if n == 1 { vec![m.at(0, 0)] } else { Vec::new() };
        return (vals, v);
    }

    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.at(i, j) * m.at(i, j);
            }
        }
        let scale = m.max_abs().max(1e-300);
        if math::sqrt(off) <= 1e-14 * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.at(p, q);
                if math::abs(apq) <= 1e-300 {
                    continue;
                }
                let app = m.at(p, p);
                let aqq = m.at(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                // Stable tangent of the rotation angle.
                let t = if theta >= 0.0 {
                    1.0 / (theta + math::hypot(1.0, theta))
                } else {
                    1.0 / (theta - math::hypot(1.0, theta))
                };
                let c = 1.0 / math::hypot(1.0, t);
                let s = t * c;

                for k in 0..n {
                    let mkp = m.at(k, p);
                    let mkq = m.at(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.at(p, k);
                    let mqk = m.at(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.at(k, p);
                    let vkq = v.at(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.at(i, i).total_cmp(&m.at(j, j)));
    let vals: Vec<f64> = order.iter().map(|&i| m.at(i, i)).collect();
    let mut vecs = DenseMat::zeros(n, n);
    for (new_c, &old_c) in order.iter().enumerate() {
        for r in 0..n {
            vecs.set(r, new_c, v.at(r, old_c));
        }
    }
    (vals, vecs)
}

/// Smallest eigenpairs of a large symmetric operator via Lanczos with full
/// reorthogonalization.
///
/// `apply` computes `y = A x`; `upper_bound` must dominate the spectrum of
/// `A` so that `upper_bound * I - A` is positive semi-definite. Returns
/// `want` eigenpairs of `A` in ascending order. The Krylov basis grows until
/// the wanted Ritz residuals fall below `tol` or `max_dim` is reached.
pub fn lanczos_smallest(
    apply: &dyn Fn(&[f64], &mut [f64]),
    n: usize,
    want: usize,
    upper_bound: f64,
    max_dim: usize,
    tol: f64,
    seed: u64,
) -> (Vec<f64>, DenseMat) {
    assert!(want <= n, "cannot request more eigenpairs than the dimension");
    let max_dim = max_dim.min(n).max(want + 2).min(n);
    let mut r = rng(mix(seed, 0x4c41_4e43));

    // Operator B = ub*I - A; its largest eigenpairs are A's smallest.
    let shifted = |x: &[f64], out: &mut [f64]| {
        apply(x, out);
        for (o, xi) in out.iter_mut().zip(x.iter()) {
            *o = upper_bound * xi - *o;
        }
    };

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_dim);
    let mut alphas: Vec<f64> = Vec::with_capacity(max_dim);
    let mut betas: Vec<f64> = Vec::with_capacity(max_dim);

    let mut q = random_unit(n, &mut r);
    let mut work = vec![0.0; n];

    let ritz_vals: Vec<f64>;
    let ritz_small: DenseMat;

    loop {
        basis.push(q.clone());
        let m = basis.len();
        shifted(&q, &mut work);
        let alpha = dot(&work, &q);
        alphas.push(alpha);
        for (w, qi) in work.iter_mut().zip(q.iter()) {
            *w -= alpha * qi;
        }
        if m >= 2 {
            let beta_prev = betas[m - 2];
            for (w, qi) in work.iter_mut().zip(basis[m - 2].iter()) {
                *w -= beta_prev * qi;
            }
        }
        // Full reorthogonalization, twice for stability.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&work, b);
                for (w, bi) in work.iter_mut().zip(b.iter()) {
                    *w -= c * bi;
                }
            }
        }
        let beta = math::sqrt(dot(&work, &work));

        let done_dim = m == max_dim;
        let check = done_dim || (m >= want + 2 && m % 8 == 0);
        if check {
            let (vals, vecs) = tridiag_eigh(&alphas, &betas);
            // Largest `want` Ritz pairs of B.
            let top: Vec<usize> = (0..m).rev().take(want).collect();
            let mut converged = true;
            for &idx in &top {
                let resid = beta * math::abs(vecs.at(m - 1, idx));
                if resid > tol * upper_bound.max(1.0) {
                    converged = false;
                    break;
                }
            }
            if converged || done_dim {
                ritz_vals = top.iter().map(|&i| vals[i]).collect();
                ritz_small = DenseMat::from_fn(m, want, |r_, c_| vecs.at(r_, top[c_]));
                break;
            }
        }

        if beta <= 1e-12 * upper_bound.max(1.0) {
            // Invariant subspace hit; restart with a fresh direction.
            let mut fresh = random_unit(n, &mut r);
            for b in &basis {
                let c = dot(&fresh, b);
                for (f, bi) in fresh.iter_mut().zip(b.iter()) {
                    *f -= c * bi;
                }
            }
            let norm = math::sqrt(dot(&fresh, &fresh));
            if norm <= 1e-12 || m == n {
                let (vals, vecs) = tridiag_eigh(&alphas, &betas);
                let top: Vec<usize> = (0..m).rev().take(want.min(m)).collect();
                ritz_vals = top.iter().map(|&i| vals[i]).collect();
                ritz_small = DenseMat::from_fn(m, top.len(), |r_, c_| vecs.at(r_, top[c_]));
                break;
            }
            for f in &mut fresh {
                *f /= norm;
            }
            betas.push(0.0);
            q = fresh;
        } else {
            betas.push(beta);
            q = work.iter().map(|w| w / beta).collect();
        }
    }

    // Assemble Ritz vectors in the original space and convert eigenvalues
    // back to A's spectrum (ascending).
    let m = basis.len();
    let k = ritz_small.cols();
    let mut vecs = DenseMat::zeros(n, k);
    for c in 0..k {
        for (r_i, b) in basis.iter().enumerate().take(m) {
            let w = ritz_small.at(r_i, c);
            if w == 0.0 {
                continue;
            }
            for (row, bi) in b.iter().enumerate() {
                vecs.add_at(row, c, w * bi);
            }
        }
    }
    let vals: Vec<f64> = ritz_vals.iter().map(|v| upper_bound - v).collect();
    (vals, vecs)
}

/// Eigendecomposition of the symmetric tridiagonal matrix given by `alphas`
/// (diagonal) and `betas` (off-diagonal), via Jacobi on the small dense form.
fn tridiag_eigh(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, DenseMat) {
    let m = alphas.len();
    let mut t = DenseMat::zeros(m, m);
    for i in 0..m {
        t.set(i, i, alphas[i]);
        if i + 1 < m {
            t.set(i, i + 1, betas[i]);
            t.set(i + 1, i, betas[i]);
        }
    }
    jacobi_eigh(&t)
}

fn random_unit(n: usize, r: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| r.gen::<f64>() * 2.0 - 1.0).collect();
        let norm = math::sqrt(dot(&v, &v));
        if norm > 1e-6 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_symmetric(n: usize, seed: u64) -> DenseMat {
        let mut r = rng(seed);
        let mut a = DenseMat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = r.gen::<f64>() * 2.0 - 1.0;
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
        a
    }

    #[test]
    fn jacobi_diagonal_matrix() {
        let mut a = DenseMat::zeros(3, 3);
        a.set(0, 0, 3.0);
        a.set(1, 1, 1.0);
        a.set(2, 2, 2.0);
        let (vals, _) = jacobi_eigh(&a);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
        assert!((vals[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_reconstructs_random_matrix() {
        let a = random_symmetric(10, 11);
        let (vals, vecs) = jacobi_eigh(&a);
        // A = V diag(vals) Vᵀ
        let mut recon = DenseMat::zeros(10, 10);
        for i in 0..10 {
            for j in 0..10 {
                let mut acc = 0.0;
                for k in 0..10 {
                    acc += vecs.at(i, k) * vals[k] * vecs.at(j, k);
                }
                recon.set(i, j, acc);
            }
        }
        for i in 0..10 {
            for j in 0..10 {
                assert!(
                    (recon.at(i, j) - a.at(i, j)).abs() < 1e-9,
                    "reconstruction off at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn jacobi_eigenvectors_orthonormal() {
        let a = random_symmetric(8, 5);
        let (_, vecs) = jacobi_eigh(&a);
        for i in 0..8 {
            for j in 0..8 {
                let d = dot(&vecs.column(i), &vecs.column(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cholesky_solve_roundtrip() {
        let mut a = random_symmetric(6, 3);
        // Make it diagonally dominant, hence SPD.
        for i in 0..6 {
            a.add_at(i, i, 8.0);
        }
        let b = DenseMat::from_fn(6, 2, |r, c| (r + c) as f64 * 0.5 - 1.0);
        let x = solve_spd(&a, &b).unwrap();
        let ax = a.matmul(&x);
        for i in 0..6 {
            for j in 0..2 {
                assert!((ax.at(i, j) - b.at(i, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = DenseMat::zeros(2, 2);
        a.set(0, 0, 1.0);
        a.set(1, 1, -1.0);
        assert!(cholesky(&a).is_err());
    }

    #[test]
    fn lanczos_matches_jacobi_on_smallest_pairs() {
        let mut a = random_symmetric(60, 17);
        // Shift to be comfortably PSD with a known upper bound.
        for i in 0..60 {
            a.add_at(i, i, 10.0);
        }
        let (jv, jw) = jacobi_eigh(&a);
        let ub = jv[59] + 1.0;
        let apply = |x: &[f64], out: &mut [f64]| a.matvec(x, out);
        let (lv, lw) = lanczos_smallest(&apply, 60, 4, ub, 60, 1e-12, 9);
        for i in 0..4 {
            assert!(
                (lv[i] - jv[i]).abs() < 1e-8,
                "eigenvalue {i}: {} vs {}",
                lv[i],
                jv[i]
            );
            let overlap = dot(&lw.column(i), &jw.column(i)).abs();
            assert!(overlap > 1.0 - 1e-6, "eigenvector {i} overlap {overlap}");
        }
    }

    #[test]
    fn matmul_and_transpose_agree() {
        let a = DenseMat::from_fn(3, 4, |r, c| (r * 4 + c) as f64);
        let b = DenseMat::from_fn(3, 2, |r, c| (r + c) as f64);
        let direct = a.transpose().matmul(&b);
        let fused = a.transpose_matmul(&b);
        assert_eq!(direct, fused);
    }
}
