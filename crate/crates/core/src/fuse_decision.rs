//! Decision-level fusion: each selected granularity is a view with its own
//! tag-confidence affinity graph and linear projection; codes, projections,
//! and a simplex-constrained view weighting are learned jointly by
//! alternating optimization of
//!
//! ```text
//! C1 tr(Yᵀ Σ L~_k Y) + C2 ||Y - Σ a_k Θ_k W_k||² + Σ ||W_k||²
//!     s.t. Yᵀ1 = 0, YᵀY = I, aᵀ1 = 1, a >= 0
//! ```
//!
//! Steps per round: (1) Y-step — with the ridge-optimal W eliminated in
//! closed form, Y is the smallest-eigenvector problem of a composite matrix,
//! solved subject to the centering constraint; (2) W-step — the stacked ridge
//! solve at the new Y; (3) a-step — projected gradient on the quadratic in
//! `a` over the simplex. Every step is an exact or descending minimization,
//! so the recorded objective never increases.

use alloc::vec;
use alloc::vec::Vec;

use crate::affinity::{build_affinity, degree_and_laplacian, AffinityParams};
use crate::corpus::{Corpus, SparseDocVector};
use crate::fuse_feature::chosen_models;
use crate::linalg::{dot, jacobi_eigh, lanczos_smallest, solve_spd, DenseMat};
use crate::math;
use crate::retrieval::HashCode;
use crate::rng::mix;
use crate::selector::SelectionResult;
use crate::spectral::{binarize_columns, simplex_project, CodeMatrix, Embedding};
use crate::topics::{infer_corpus_thetas, TopicDistribution, TopicModel, TopicModelBank};
use crate::{Error, Result};

const SALT_DEC_THETA: u64 = 0x6465_6331;
const DENSE_EIG_MAX: usize = 800;

/// One view: a granularity's topic features and normalized Laplacian.
#[derive(Debug, Clone)]
pub struct ViewData {
    pub k: usize,
    /// n x K_k matrix of per-document topic distributions.
    pub features: DenseMat,
    /// Symmetric normalized Laplacian of the view's affinity graph.
    pub laplacian: DenseMat,
}

/// The learned multi-view model.
#[derive(Debug, Clone)]
pub struct MultiViewModel {
    pub views: Vec<ViewData>,
    /// Per-view K_k x l projection matrices.
    pub w_set: Vec<DenseMat>,
    /// Simplex-constrained view weights.
    pub alpha: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    /// Objective value at initialization and after each alternation round.
    pub objective_trace: Vec<f64>,
    /// View weights at initialization and after each alternation round.
    pub alpha_trace: Vec<Vec<f64>>,
    /// False when the round budget ran out before the tolerance was met.
    pub converged: bool,
    pub l: usize,
}

impl MultiViewModel {
    pub fn m(&self) -> usize {
        self.views.len()
    }

    pub fn n(&self) -> usize {
        self.views.first().map(|v| v.features.rows()).unwrap_or(0)
    }

    /// Combined real-valued prediction `Σ a_k Θ_k W_k` for the training set.
    pub fn predictions(&self) -> DenseMat {
        let mut p = DenseMat::zeros(self.n(), self.l);
        for ((view, w), &a) in self.views.iter().zip(&self.w_set).zip(&self.alpha) {
            if a == 0.0 {
                continue;
            }
            let b = view.features.matmul(w);
            p.add_scaled(&b, a);
        }
        p
    }
}

/// Evaluates the objective at an explicit `Y` (n x l).
pub fn multiview_objective(mvm: &MultiViewModel, y: &DenseMat) -> Result<f64> {
    let n = mvm.n();
    if y.rows() != n || y.cols() != mvm.l {
        return Err(Error::invalid("Y shape does not match the model"));
    }
    for (view, w) in mvm.views.iter().zip(&mvm.w_set) {
        if view.laplacian.rows() != n || w.rows() != view.k || w.cols() != mvm.l {
            return Err(Error::invalid("view shapes are inconsistent"));
        }
    }
    if mvm.alpha.len() != mvm.views.len() {
        return Err(Error::LengthMismatch {
            left: mvm.alpha.len(),
            right: mvm.views.len(),
        });
    }

    let mut lap_term = 0.0;
    let mut buf = vec![0.0f64; n];
    for view in &mvm.views {
        for c in 0..mvm.l {
            let col = y.column(c);
            view.laplacian.matvec(&col, &mut buf);
            lap_term += dot(&col, &buf);
        }
    }

    let p = mvm.predictions();
    let mut fit = 0.0;
    for r in 0..n {
        for c in 0..mvm.l {
            let d = y.at(r, c) - p.at(r, c);
            fit += d * d;
        }
    }

    let reg: f64 = mvm.w_set.iter().map(|w| w.frobenius_norm_sq()).sum();
    Ok(mvm.c1 * lap_term + mvm.c2 * fit + reg)
}

/// Optimization knobs for [`fit_codes_dec`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecConfig {
    pub c1: f64,
    pub c2: f64,
    pub max_rounds: usize,
    /// Relative objective-change tolerance for convergence.
    pub tol: f64,
    /// Projected-gradient iterations per alpha-step.
    pub alpha_steps: usize,
    pub seed: u64,
}

impl Default for DecConfig {
    fn default() -> Self {
        DecConfig {
            c1: 1.0,
            c2: 1.0,
            max_rounds: 30,
            tol: 1e-6,
            alpha_steps: 100,
            seed: 42,
        }
    }
}

/// Everything produced by decision-level fitting.
#[derive(Debug, Clone)]
pub struct DecFit {
    pub mvm: MultiViewModel,
    pub codes: CodeMatrix,
    pub embedding: Embedding,
    /// Per-bit query thresholds: medians of the training predictions.
    pub thresholds: Vec<f64>,
    /// Frozen training thetas, indexed `[chosen model][doc]`.
    pub thetas: Vec<Vec<TopicDistribution>>,
}

/// Learns codes by alternating optimization over the selected views.
pub fn fit_codes_dec(
    c: &Corpus,
    sel: &SelectionResult,
    bank: &TopicModelBank,
    l: usize,
    params: AffinityParams,
    config: &DecConfig,
) -> Result<DecFit> {
    if !(config.c1 > 0.0 && config.c2 > 0.0) {
        return Err(Error::invalid("C1 and C2 must be positive"));
    }
    let n = c.n();
    if l == 0 || l + 1 > n {
        return Err(Error::invalid("l must be in 1..=n-1"));
    }
    let models = chosen_models(bank, sel)?;
    let m = models.len();

    // Per-view features and normalized Laplacians.
    let mut views = Vec::with_capacity(m);
    let mut thetas_frozen = Vec::with_capacity(m);
    for model in &models {
        let thetas = infer_corpus_thetas(
            model,
            c,
            mix(mix(config.seed, SALT_DEC_THETA), model.k() as u64),
        );
        let graph = build_affinity(&thetas, c.tags(), params)?;
        let (_, lap) = degree_and_laplacian(&graph, true);
        let mut features = DenseMat::zeros(n, model.k());
        for (i, t) in thetas.iter().enumerate() {
            features.row_mut(i).copy_from_slice(t.as_slice());
        }
        views.push(ViewData {
            k: model.k(),
            features,
            laplacian: lap,
        });
        thetas_frozen.push(thetas);
    }

    let mut lap_sum = DenseMat::zeros(n, n);
    for view in &views {
        lap_sum.add_scaled(&view.laplacian, 1.0);
    }

    // Initialization: uniform alpha, zero W, Laplacian-only Y.
    let mut alpha = vec![1.0 / m as f64; m];
    let mut w_set: Vec<DenseMat> = views.iter().map(|v| DenseMat::zeros(v.k, l)).collect();
    let mut composite = lap_sum.clone();
    composite.scale(config.c1);
    // Spectrum bound for the composite: C1 * 2M plus the C2 ridge term later.
    let bound0 = config.c1 * 2.0 * m as f64 + 1.0;
    let mut y = smallest_centered_eigvecs(&composite, l, bound0, config.seed);

    let mut mvm = MultiViewModel {
        views,
        w_set: w_set.clone(),
        alpha: alpha.clone(),
        c1: config.c1,
        c2: config.c2,
        objective_trace: Vec::new(),
        alpha_trace: alloc::vec![alpha.clone()],
        converged: false,
        l,
    };
    let mut obj = multiview_objective(&mvm, &y)?;
    mvm.objective_trace.push(obj);

    let k_tilde: usize = mvm.views.iter().map(|v| v.k).sum();
    for _round in 0..config.max_rounds {
        // --- Y-step (with W eliminated in closed form) ---
        // Stacked weighted features Z = [a_1 Θ_1 | ... | a_M Θ_M].
        let mut z = DenseMat::zeros(n, k_tilde);
        let mut off = 0;
        for (view, &a) in mvm.views.iter().zip(&alpha) {
            for r in 0..n {
                let src = view.features.row(r);
                let dst = z.row_mut(r);
                for (j, &v) in src.iter().enumerate() {
                    dst[off + j] = a * v;
                }
            }
            off += view.k;
        }
        // H = ZᵀZ + I/C2; ridge term C2 (I - Z H⁻¹ Zᵀ).
        let mut h = z.transpose_matmul(&z);
        for i in 0..k_tilde {
            h.add_at(i, i, 1.0 / config.c2);
        }
        let hinv_zt = solve_spd(&h, &z.transpose())?;
        let zh = z.matmul(&hinv_zt); // Z H⁻¹ Zᵀ, n x n

        let mut composite = lap_sum.clone();
        composite.scale(config.c1);
        for i in 0..n {
            composite.add_at(i, i, config.c2);
        }
        composite.add_scaled(&zh, -config.c2);
        let bound = config.c1 * 2.0 * m as f64 + config.c2 + 1.0;
        let y_new = smallest_centered_eigvecs(&composite, l, bound, config.seed);

        // --- W-step: stacked ridge at the new Y ---
        let zt_y = z.transpose_matmul(&y_new);
        let w_stacked = solve_spd(&h, &zt_y)?;
        let mut off = 0;
        for (view, w) in mvm.views.iter().zip(w_set.iter_mut()) {
            for r in 0..view.k {
                for cidx in 0..l {
                    w.set(r, cidx, w_stacked.at(off + r, cidx));
                }
            }
            off += view.k;
        }
        y = y_new;

        // --- alpha-step: projected gradient over the simplex ---
        // f(a) = C2 || Y - Σ a_k B_k ||² with B_k = Θ_k W_k.
        let b_mats: Vec<DenseMat> = mvm
            .views
            .iter()
            .zip(&w_set)
            .map(|(v, w)| v.features.matmul(w))
            .collect();
        let mut gram = DenseMat::zeros(m, m);
        let mut lin = vec![0.0f64; m];
        for i in 0..m {
            lin[i] = y.frobenius_dot(&b_mats[i]);
            for j in 0..m {
                gram.set(i, j, b_mats[i].frobenius_dot(&b_mats[j]));
            }
        }
        let trace_g: f64 = (0..m).map(|i| gram.at(i, i)).sum();
        let lipschitz = 2.0 * config.c2 * trace_g;
        if lipschitz > 0.0 {
            let step = 1.0 / lipschitz;
            for _ in 0..config.alpha_steps {
                let mut grad = vec![0.0f64; m];
                for i in 0..m {
                    let mut g = -2.0 * config.c2 * lin[i];
                    for j in 0..m {
                        g += 2.0 * config.c2 * gram.at(i, j) * alpha[j];
                    }
                    grad[i] = g;
                }
                let moved: Vec<f64> = alpha
                    .iter()
                    .zip(&grad)
                    .map(|(a, g)| a - step * g)
                    .collect();
                let projected = simplex_project(&moved)?;
                if projected
                    .iter()
                    .zip(&alpha)
                    .all(|(a, b)| math::abs(a - b) < 1e-15)
                {
                    alpha = projected;
                    break;
                }
                alpha = projected;
            }
        }

        mvm.w_set = w_set.clone();
        mvm.alpha = alpha.clone();
        mvm.alpha_trace.push(alpha.clone());
        let new_obj = multiview_objective(&mvm, &y)?;
        mvm.objective_trace.push(new_obj);
        let rel = (obj - new_obj) / obj.abs().max(1.0);
        obj = new_obj;
        if rel.abs() < config.tol {
            mvm.converged = true;
            break;
        }
    }

    let embedding = Embedding::new(y, vec![0.0; l]);
    let codes = binarize_columns(embedding.matrix());
    let predictions = mvm.predictions();
    let thresholds = binarize_columns(&predictions).medians().to_vec();

    Ok(DecFit {
        mvm,
        codes,
        embedding,
        thresholds,
        thetas: thetas_frozen,
    })
}

/// Smallest `l` eigenvectors of a symmetric matrix restricted to the
/// subspace orthogonal to the all-ones vector: solve on `P A P` with the
/// ones-direction deflected above the spectrum, where `P = I - 11ᵀ/n`.
pub(crate) fn smallest_centered_eigvecs(a: &DenseMat, l: usize, bound: f64, seed: u64) -> DenseMat {
    let n = a.rows();
    // B = P A P + bound * 11ᵀ/n, built densely.
    let mut row_means = vec![0.0f64; n];
    for i in 0..n {
        row_means[i] = a.row(i).iter().sum::<f64>() / n as f64;
    }
    let total_mean = row_means.iter().sum::<f64>() / n as f64;
    let mut b = a.clone();
    for i in 0..n {
        for j in 0..n {
            let v = b.at(i, j) - row_means[i] - row_means[j] + total_mean + bound / n as f64;
            b.set(i, j, v);
        }
    }

    let vecs = if n <= DENSE_EIG_MAX {
        let (_, vecs) = jacobi_eigh(&b);
        vecs
    } else {
        let apply = |x: &[f64], out: &mut [f64]| b.matvec(x, out);
        let (_, vecs) = lanczos_smallest(
            &apply,
            n,
            l,
            bound + 1.0,
            (4 * l + 80).min(n),
            1e-10,
            mix(seed, 0x6465_6332),
        );
        vecs
    };

    let mut y = DenseMat::zeros(n, l);
    for c in 0..l {
        // Deterministic sign: first nonzero entry positive.
        let mut sign = 1.0;
        for r in 0..n {
            let v = vecs.at(r, c);
            if v != 0.0 {
                sign = if v > 0.0 { 1.0 } else { -1.0 };
                break;
            }
        }
        for r in 0..n {
            y.set(r, c, sign * vecs.at(r, c));
        }
    }
    y
}

/// Trained decision-level encoder.
#[derive(Debug, Clone)]
pub struct DecEncoder {
    /// Chosen topic models in selection order.
    pub models: Vec<TopicModel>,
    pub alpha: Vec<f64>,
    pub w_set: Vec<DenseMat>,
    /// Per-bit thresholds (medians of training predictions).
    pub thresholds: Vec<f64>,
}

impl DecEncoder {
    /// Real-valued prediction `Σ a_k W_kᵀ θ_k` for a query.
    pub fn predict(&self, x: &SparseDocVector, seed: u64) -> Vec<f64> {
        let l = self.thresholds.len();
        let mut scores = vec![0.0f64; l];
        for ((model, w), &a) in self.models.iter().zip(&self.w_set).zip(&self.alpha) {
            if a == 0.0 {
                continue;
            }
            let theta = model.infer_theta(x, mix(seed, model.k() as u64));
            for (r, &t) in theta.as_slice().iter().enumerate() {
                for (j, s) in scores.iter_mut().enumerate() {
                    *s += a * t * w.at(r, j);
                }
            }
        }
        scores
    }

    /// Encodes a query: thresholded signs of the prediction, `sgn(0) = +1`.
    pub fn encode(&self, x: &SparseDocVector, seed: u64) -> HashCode {
        let scores = self.predict(x, seed);
        let bits: Vec<i8> = scores
            .iter()
            .zip(&self.thresholds)
            .map(|(&s, &t)| if s - t >= 0.0 { 1 } else { -1 })
            .collect();
        HashCode::from_bits(&bits)
    }
}
