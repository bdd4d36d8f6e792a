//! Shared spectral numerics: symmetric eigendecomposition, Laplacian-eigenmap
//! embeddings, median binarization, and Euclidean simplex projection.

use alloc::vec;
use alloc::vec::Vec;

use crate::affinity::{degree_and_laplacian, AffinityGraph};
use crate::linalg::{jacobi_eigh, lanczos_smallest, DenseMat};
use crate::math;
use crate::{Error, Result};

/// Above this order the eigenmap switches from full Jacobi to Lanczos for
/// the smallest eigenpairs.
const DENSE_EIG_MAX: usize = 800;

/// Eigenvalues below this are flagged as near-zero (extra graph components).
const NEAR_ZERO_EIG: f64 = 1e-8;

/// Real-valued spectral embedding: one row per node, one column per
/// requested dimension, columns D-orthonormal and orthogonal to the trivial
/// constant eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    y: DenseMat,
    eigenvalues: Vec<f64>,
    near_zero: Vec<bool>,
}

impl Embedding {
    pub fn new(y: DenseMat, eigenvalues: Vec<f64>) -> Self {
        let near_zero = eigenvalues.iter().map(|&v| v < NEAR_ZERO_EIG).collect();
        Embedding {
            y,
            eigenvalues,
            near_zero,
        }
    }

    pub fn n(&self) -> usize {
        self.y.rows()
    }

    pub fn dims(&self) -> usize {
        self.y.cols()
    }

    pub fn matrix(&self) -> &DenseMat {
        &self.y
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Flags for dimensions whose eigenvalue is numerically zero, which
    /// happens when the graph has more connected components than one.
    pub fn near_zero_flags(&self) -> &[bool] {
        &self.near_zero
    }

    /// Restriction to the first `l` columns.
    pub fn truncated(&self, l: usize) -> Embedding {
        assert!(l <= self.dims());
        let y = DenseMat::from_fn(self.n(), l, |r, c| self.y.at(r, c));
        Embedding::new(y, self.eigenvalues[..l].to_vec())
    }
}

/// Binary code matrix in `{-1, +1}` with the per-column median thresholds
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeMatrix {
    bits: Vec<i8>,
    n: usize,
    l: usize,
    medians: Vec<f64>,
}

impl CodeMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn bit(&self, row: usize, col: usize) -> i8 {
        self.bits[row * self.l + col]
    }

    pub fn row(&self, row: usize) -> &[i8] {
        &self.bits[row * self.l..(row + 1) * self.l]
    }

    pub fn medians(&self) -> &[f64] {
        &self.medians
    }

    /// Packs every row into a [`HashCode`](crate::retrieval::HashCode).
    pub fn to_hash_codes(&self) -> Vec<crate::retrieval::HashCode> {
        (0..self.n)
            .map(|r| crate::retrieval::HashCode::from_bits(self.row(r)))
            .collect()
    }
}

/// Spectral embedding from the generalized eigenproblem `L v = lambda D v`.
///
/// The problem is reduced with the `D^(-1/2)` similarity transform; the
/// trivial constant eigenvector is deflected away and the `l` smallest
/// remaining eigenpairs are returned in ascending order. Extra near-zero
/// eigenvalues from additional graph components are kept but flagged.
/// Isolated (zero-degree) nodes embed at zero. Each column's sign is fixed
/// so its first nonzero entry is positive.
pub fn laplacian_eigenmap(g: &AffinityGraph, l: usize) -> Result<Embedding> {
    let n = g.n();
    if l == 0 {
        return Err(Error::invalid("embedding needs at least one dimension"));
    }
    // There are n - 1 eigenpairs left after excluding the trivial constant
    // eigenvector.
    if l + 1 > n {
        return Err(Error::invalid("l must be at most n - 1"));
    }

    let (deg, mut lap) = degree_and_laplacian(g, true);

    // Deflate the trivial direction u0 = D^(1/2) 1 (normalized): add a large
    // rank-one term so u0's eigenvalue moves above everything we want.
    let mut u0: Vec<f64> = deg.iter().map(|&d| math::sqrt(d)).collect();
    let u0_norm = math::sqrt(u0.iter().map(|v| v * v).sum::<f64>());
    if u0_norm > 0.0 {
        for v in &mut u0 {
            *v /= u0_norm;
        }
    }
    // Normalized Laplacian spectrum lies in [0, 2]; 3.0 clears it.
    let shift = 3.0;
    for i in 0..n {
        for j in 0..n {
            lap.add_at(i, j, shift * u0[i] * u0[j]);
        }
    }

    let (vals, vecs) = if n <= DENSE_EIG_MAX {
        let (vals, vecs) = jacobi_eigh(&lap);
        (vals[..l].to_vec(), vecs)
    } else {
        let apply = |x: &[f64], out: &mut [f64]| lap.matvec(x, out);
        // Spectrum of the deflated matrix is within [0, 3] + identity rows.
        let (vals, vecs) = lanczos_smallest(&apply, n, l, 3.5, (4 * l + 80).min(n), 1e-10, 17);
        (vals, vecs)
    };

    let inv_sqrt_deg: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / math::sqrt(d) } else { 0.0 })
        .collect();
    let mut y = DenseMat::zeros(n, l);
    for c in 0..l {
        // Sign convention: first nonzero entry of the eigenvector positive.
        let mut sign = 1.0;
        for r in 0..n {
            let v = vecs.at(r, c);
            if v != 0.0 {
                sign = if v > 0.0 { 1.0 } else { -1.0 };
                break;
            }
        }
        for r in 0..n {
            y.set(r, c, sign * vecs.at(r, c) * inv_sqrt_deg[r]);
        }
    }
    Ok(Embedding::new(y, vals[..l].to_vec()))
}

/// Thresholds every embedding column at its median: the `ceil(n/2)`-th
/// smallest value. Entries strictly above the median map to `+1`, the rest
/// to `-1`, so at most `ceil(n/2)` values map to `-1`.
pub fn median_binarize(e: &Embedding) -> CodeMatrix {
    binarize_columns(e.matrix())
}

/// [`median_binarize`] for a raw real-valued code matrix.
pub fn binarize_columns(y: &DenseMat) -> CodeMatrix {
    let n = y.rows();
    let l = y.cols();
    let mut medians = Vec::with_capacity(l);
    let mut bits = vec![0i8; n * l];
    let mut col = vec![0.0f64; n];
    for c in 0..l {
        for r in 0..n {
            col[r] = y.at(r, c);
        }
        col.sort_by(f64::total_cmp);
        let m = col[(n - 1) / 2]; // ceil(n/2)-th smallest, 1-indexed
        medians.push(m);
        for r in 0..n {
            bits[r * l + c] = if y.at(r, c) > m { 1 } else { -1 };
        }
    }
    CodeMatrix { bits, n, l, medians }
}

/// Euclidean projection onto the probability simplex.
pub fn simplex_project(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::invalid("cannot project an empty vector"));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    Ok(v.iter().map(|&x| (x - tau).max(0.0)).collect())
}

/// Eigendecomposition of a dense symmetric matrix; eigenvalues ascending,
/// eigenvectors orthonormal columns. Rejects non-symmetric input.
pub fn symmetric_eig(a: &DenseMat) -> Result<(Vec<f64>, DenseMat)> {
    if a.rows() != a.cols() {
        return Err(Error::NotSymmetric);
    }
    let tol = 1e-9 * a.max_abs().max(1.0);
    if !a.is_symmetric(tol) {
        return Err(Error::NotSymmetric);
    }
    Ok(jacobi_eigh(a))
}
