//! Tag-confidence-weighted sparse kNN similarity graphs.
//!
//! An edge `(i, j)` exists when either endpoint is among the other's k
//! nearest neighbors by cosine; its weight is the cosine scaled by a tag
//! confidence: `a` when the documents share a tag, `b` otherwise, with
//! `1 >= a >= b > 0`. The graph is symmetric by construction.

use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{SparseDocVector, TagSet};
use crate::linalg::DenseMat;
use crate::math;
use crate::topics::TopicDistribution;
use crate::{Error, Result};

/// Feature vectors the graph can be built over: anything with a dot product
/// and a norm.
pub trait AffinityFeatures {
    fn dot(&self, other: &Self) -> f64;
    fn norm(&self) -> f64;
}

impl AffinityFeatures for SparseDocVector {
    fn dot(&self, other: &Self) -> f64 {
        SparseDocVector::dot(self, other)
    }

    fn norm(&self) -> f64 {
        SparseDocVector::norm(self)
    }
}

impl AffinityFeatures for TopicDistribution {
    fn dot(&self, other: &Self) -> f64 {
        crate::linalg::dot(self.as_slice(), other.as_slice())
    }

    fn norm(&self) -> f64 {
        math::sqrt(crate::linalg::dot(self.as_slice(), self.as_slice()))
    }
}

/// Neighbor count and tag confidences for graph construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityParams {
    pub k: usize,
    /// Confidence for tag-sharing pairs.
    pub a: f64,
    /// Confidence for non-sharing pairs.
    pub b: f64,
}

impl Default for AffinityParams {
    fn default() -> Self {
        AffinityParams {
            k: 25,
            a: 1.0,
            b: 0.1,
        }
    }
}

/// Sparse symmetric similarity matrix; the diagonal is excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    n: usize,
    /// Per-row `(col, weight)` entries, sorted by column.
    rows: Vec<Vec<(u32, f64)>>,
    params: AffinityParams,
}

impl AffinityGraph {
    /// Builds a graph from explicit undirected `(i, j, s_ij)` triplets, one
    /// entry per pair. Mirrors the debug triplet export format.
    pub fn from_triplets(
        n: usize,
        triplets: &[(u32, u32, f64)],
        params: AffinityParams,
    ) -> Result<AffinityGraph> {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for &(i, j, s) in triplets {
            let (i_us, j_us) = (i as usize, j as usize);
            if i_us >= n || j_us >= n || i == j {
                return Err(Error::invalid("triplet indices out of range"));
            }
            if !(s > 0.0) {
                return Err(Error::invalid("triplet weights must be positive"));
            }
            rows[i_us].push((j, s));
            rows[j_us].push((i, s));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            for pair in row.windows(2) {
                if pair[0].0 == pair[1].0 {
                    return Err(Error::invalid(alloc::format!(
                        "duplicate edge at row {i}"
                    )));
                }
            }
        }
        Ok(AffinityGraph { n, rows, params })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> AffinityParams {
        self.params
    }

    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    /// Iterates all stored entries `(i, j, s_ij)`, both orientations.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, s)| (i, j as usize, s)))
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, s)| s).sum()
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    /// Quadratic form `sum_ij s_ij * ||y_i - y_j||^2` over rows of `y`.
    pub fn pairwise_objective(&self, y: &DenseMat) -> f64 {
        assert_eq!(y.rows(), self.n);
        let mut acc = 0.0;
        for (i, j, s) in self.entries() {
            if j <= i {
                continue; // count each undirected pair once
            }
            let ri = y.row(i);
            let rj = y.row(j);
            let mut d2 = 0.0;
            for (a, b) in ri.iter().zip(rj.iter()) {
                let d = a - b;
                d2 += d * d;
            }
            acc += s * d2;
        }
        2.0 * acc
    }
}

/// Builds the kNN affinity graph of Eq.-style local similarity: cosine
/// scaled by tag confidence, symmetrized by union.
pub fn build_affinity<F: AffinityFeatures>(
    feats: &[F],
    tags: &[TagSet],
    params: AffinityParams,
) -> Result<AffinityGraph> {
    let n = feats.len();
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    if tags.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: tags.len(),
        });
    }
    if !(params.a <= 1.0 && params.a >= params.b && params.b > 0.0) {
        return Err(Error::invalid("confidences must satisfy 1 >= a >= b > 0"));
    }
    if params.k >= n {
        return Err(Error::invalid("k must be smaller than the corpus size"));
    }

    let norms: Vec<f64> = feats.iter().map(|f| f.norm()).collect();
    let cos = |i: usize, j: usize| -> f64 {
        if norms[i] == 0.0 || norms[j] == 0.0 {
            return 0.0;
        }
        let c = feats[i].dot(&feats[j]) / (norms[i] * norms[j]);
        debug_assert!(c >= -1e-9, "negative cosine {c} for non-negative features");
        c.max(0.0)
    };

    // Top-k neighbor ids per row; ties prefer the smaller id.
    let mut neighbors: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut sims: Vec<(f64, u32)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        sims.clear();
        for j in 0..n {
            if j != i {
                sims.push((cos(i, j), j as u32));
            }
        }
        sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        neighbors.push(sims.iter().take(params.k).map(|&(_, j)| j).collect());
    }

    // Union symmetrization with a single weight per pair.
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for &j in &neighbors[i] {
            let j = j as usize;
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            // Process each unordered pair once, from the side that sees it
            // first in scan order.
            if i > j && neighbors[j].contains(&(i as u32)) {
                continue; // already added when scanning row j
            }
            let c = cos(lo, hi);
            if c <= 0.0 {
                continue;
            }
            let conf = if tags[lo].intersects(&tags[hi]) {
                params.a
            } else {
                params.b
            };
            let s = conf * c;
            rows[lo].push((hi as u32, s));
            rows[hi].push((lo as u32, s));
        }
    }
    for row in &mut rows {
        row.sort_by_key(|&(j, _)| j);
        row.dedup_by_key(|&mut (j, _)| j);
    }

    Ok(AffinityGraph { n, rows, params })
}

/// Degree vector and (optionally normalized) Laplacian of the graph.
///
/// Unnormalized: `L = D - S`. Normalized: `L~ = D^(-1/2) L D^(-1/2)`, with
/// zero-degree rows replaced by identity rows.
pub fn degree_and_laplacian(g: &AffinityGraph, normalized: bool) -> (Vec<f64>, DenseMat) {
    let n = g.n();
    let deg = g.degrees();
    let mut lap = DenseMat::zeros(n, n);
    if !normalized {
        for i in 0..n {
            lap.set(i, i, deg[i]);
        }
        for (i, j, s) in g.entries() {
            lap.add_at(i, j, -s);
        }
    } else {
        let inv_sqrt: Vec<f64> = deg
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / math::sqrt(d) } else { 0.0 })
            .collect();
        for i in 0..n {
            lap.set(i, i, 1.0);
        }
        for (i, j, s) in g.entries() {
            lap.add_at(i, j, -s * inv_sqrt[i] * inv_sqrt[j]);
        }
    }
    (deg, lap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng;
    use rand::Rng;

    fn doc(entries: &[(u32, f64)]) -> SparseDocVector {
        SparseDocVector::new(entries.to_vec()).unwrap()
    }

    #[test]
    fn identical_docs_sharing_tag_get_full_weight() {
        let feats = alloc::vec![doc(&[(0, 1.0)]), doc(&[(0, 1.0)])];
        let tags = alloc::vec![TagSet::new(alloc::vec![0]), TagSet::new(alloc::vec![0])];
        let g = build_affinity(
            &feats,
            &tags,
            AffinityParams {
                k: 1,
                ..AffinityParams::default()
            },
        )
        .unwrap();
        assert_eq!(g.row(0), &[(1, 1.0)]);
        assert_eq!(g.row(1), &[(0, 1.0)]);
    }

    #[test]
    fn disjoint_tags_get_low_confidence() {
        let feats = alloc::vec![doc(&[(0, 2.0)]), doc(&[(0, 3.0)])];
        let tags = alloc::vec![TagSet::new(alloc::vec![0]), TagSet::new(alloc::vec![1])];
        let g = build_affinity(
            &feats,
            &tags,
            AffinityParams {
                k: 1,
                ..AffinityParams::default()
            },
        )
        .unwrap();
        assert!((g.row(0)[0].1 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn parameter_validation() {
        let feats = alloc::vec![doc(&[(0, 1.0)]), doc(&[(1, 1.0)])];
        let tags = alloc::vec![TagSet::empty(), TagSet::empty()];
        let bad_conf = AffinityParams {
            k: 1,
            a: 0.1,
            b: 0.5,
        };
        assert!(build_affinity(&feats, &tags, bad_conf).is_err());
        let bad_k = AffinityParams {
            k: 2,
            ..AffinityParams::default()
        };
        assert!(build_affinity(&feats, &tags, bad_k).is_err());
    }

    fn random_graph(n: usize, k: usize, seed: u64) -> AffinityGraph {
        let mut r = rng(seed);
        let feats: Vec<SparseDocVector> = (0..n)
            .map(|_| {
                let entries: Vec<(u32, f64)> =
                    (0..6).map(|t| (t as u32, r.gen::<f64>() + 0.1)).collect();
                SparseDocVector::new(entries).unwrap()
            })
            .collect();
        let tags: Vec<TagSet> = (0..n)
            .map(|_| TagSet::new(alloc::vec![r.gen_range(0..3u32)]))
            .collect();
        build_affinity(&feats, &tags, AffinityParams { k, a: 1.0, b: 0.1 }).unwrap()
    }

    #[test]
    fn graph_is_exactly_symmetric() {
        let g = random_graph(30, 4, 8);
        for (i, j, s) in g.entries() {
            let back = g.row(j).iter().find(|&&(c, _)| c as usize == i);
            assert_eq!(back, Some(&(i as u32, s)));
        }
    }

    #[test]
    fn rows_have_at_least_k_entries() {
        let g = random_graph(25, 5, 1);
        for i in 0..25 {
            assert!(g.row(i).len() >= 5, "row {i} has {}", g.row(i).len());
        }
    }

    #[test]
    fn laplacian_of_two_node_graph() {
        let feats = alloc::vec![doc(&[(0, 1.0), (1, 1.0)]), doc(&[(0, 1.0)])];
        let tags = alloc::vec![TagSet::new(alloc::vec![0]), TagSet::new(alloc::vec![0])];
        let g = build_affinity(
            &feats,
            &tags,
            AffinityParams {
                k: 1,
                ..AffinityParams::default()
            },
        )
        .unwrap();
        // cosine = 1/sqrt(2) ~ 0.7071, confidence a = 1
        let (deg, lap) = degree_and_laplacian(&g, false);
        let s = 0.7071067811865476;
        assert!((deg[0] - s).abs() < 1e-9);
        assert!((lap.at(0, 0) - s).abs() < 1e-9);
        assert!((lap.at(0, 1) + s).abs() < 1e-9);
        assert!((lap.at(1, 0) + s).abs() < 1e-9);
        assert!((lap.at(1, 1) - s).abs() < 1e-9);
    }

    #[test]
    fn unnormalized_laplacian_annihilates_ones() {
        let g = random_graph(20, 3, 5);
        let (_, lap) = degree_and_laplacian(&g, false);
        let ones = alloc::vec![1.0; 20];
        let mut out = alloc::vec![0.0; 20];
        lap.matvec(&ones, &mut out);
        for v in out {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn laplacian_is_positive_semidefinite() {
        let g = random_graph(15, 3, 6);
        for normalized in [false, true] {
            let (_, lap) = degree_and_laplacian(&g, normalized);
            let mut r = rng(77);
            let mut out = alloc::vec![0.0; 15];
            for _ in 0..100 {
                let v: Vec<f64> = (0..15).map(|_| r.gen::<f64>() * 2.0 - 1.0).collect();
                let norm: f64 = math::sqrt(v.iter().map(|x| x * x).sum());
                let v: Vec<f64> = v.iter().map(|x| x / norm).collect();
                lap.matvec(&v, &mut out);
                let quad: f64 = v.iter().zip(&out).map(|(a, b)| a * b).sum();
                assert!(quad >= -1e-9, "v'Lv = {quad}");
            }
        }
    }

    #[test]
    fn isolated_node_gets_identity_row() {
        // Zero feature vector -> zero cosine everywhere -> isolated.
        let feats = alloc::vec![
            doc(&[(0, 1.0)]),
            doc(&[(0, 1.0)]),
            SparseDocVector::empty()
        ];
        let tags = alloc::vec![TagSet::empty(); 3];
        let g = build_affinity(
            &feats,
            &tags,
            AffinityParams {
                k: 1,
                ..AffinityParams::default()
            },
        )
        .unwrap();
        let (deg, lap) = degree_and_laplacian(&g, true);
        assert_eq!(deg[2], 0.0);
        assert_eq!(lap.at(2, 2), 1.0);
        assert_eq!(lap.at(2, 0), 0.0);
        assert_eq!(lap.at(0, 2), 0.0);
    }

    #[test]
    fn raising_a_never_decreases_sharing_edges() {
        let mut r = rng(12);
        let feats: Vec<SparseDocVector> = (0..12)
            .map(|_| {
                let entries: Vec<(u32, f64)> =
                    (0..4).map(|t| (t as u32, r.gen::<f64>() + 0.05)).collect();
                SparseDocVector::new(entries).unwrap()
            })
            .collect();
        let tags: Vec<TagSet> = (0..12)
            .map(|_| TagSet::new(alloc::vec![r.gen_range(0..2u32)]))
            .collect();
        let lo = build_affinity(&feats, &tags, AffinityParams { k: 3, a: 0.6, b: 0.1 }).unwrap();
        let hi = build_affinity(&feats, &tags, AffinityParams { k: 3, a: 0.9, b: 0.1 }).unwrap();
        for (i, j, s) in lo.entries() {
            if tags[i].intersects(&tags[j]) {
                let s_hi = hi.row(i).iter().find(|&&(c, _)| c as usize == j).unwrap().1;
                assert!(s_hi >= s - 1e-12);
            }
        }
    }
}
