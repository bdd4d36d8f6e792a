//! Feature-level fusion: concatenate the selected topic distributions with
//! their normalized weights into one vector, learn codes spectrally over a
//! tag-confidence affinity graph, and train one linear classifier per bit as
//! the hash function.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::affinity::{build_affinity, AffinityFeatures, AffinityParams};
use crate::corpus::{Corpus, SparseDocVector};
use crate::linalg::{dot, DenseMat};
use crate::math;
use crate::retrieval::HashCode;
use crate::rng::{mix, rng};
use crate::selector::SelectionResult;
use crate::spectral::{laplacian_eigenmap, median_binarize, CodeMatrix, Embedding};
use crate::topics::{infer_corpus_thetas, infer_multi, TopicDistribution, TopicModel, TopicModelBank};
use crate::{Error, Result};

const SALT_FEA_THETA: u64 = 0x6665_6131;
const SALT_SVM: u64 = 0x6665_6132;

/// Weighted concatenation of the selected topic distributions; segment `i`
/// is `mu_hat[i] * theta_i`, so it sums to `mu_hat[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeatureVector {
    values: Vec<f64>,
    norm: f64,
}

impl FusedFeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

impl AffinityFeatures for FusedFeatureVector {
    fn dot(&self, other: &Self) -> f64 {
        dot(&self.values, &other.values)
    }

    fn norm(&self) -> f64 {
        self.norm
    }
}

/// Concatenates per-granularity topic vectors scaled by their normalized
/// selection weights.
pub fn fuse(thetas: &[TopicDistribution], mu_hat: &[f64]) -> Result<FusedFeatureVector> {
    if thetas.len() != mu_hat.len() {
        return Err(Error::LengthMismatch {
            left: thetas.len(),
            right: mu_hat.len(),
        });
    }
    let total: usize = thetas.iter().map(|t| t.len()).sum();
    let mut values = Vec::with_capacity(total);
    for (theta, &w) in thetas.iter().zip(mu_hat) {
        values.extend(theta.as_slice().iter().map(|&p| w * p));
    }
    let norm = math::sqrt(dot(&values, &values));
    Ok(FusedFeatureVector { values, norm })
}

/// Per-bit linear separators: a `dim x l` weight matrix plus a bias row.
/// The sign rule maps zero pre-activations to `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHashFunction {
    w: DenseMat,
    bias: Vec<f64>,
}

impl LinearHashFunction {
    pub fn new(w: DenseMat, bias: Vec<f64>) -> LinearHashFunction {
        assert_eq!(w.cols(), bias.len());
        LinearHashFunction { w, bias }
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    pub fn l(&self) -> usize {
        self.w.cols()
    }

    pub fn weights(&self) -> &DenseMat {
        &self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Pre-activation scores `Wᵀx + bias` for a dense input.
    pub fn score_dense(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        let mut out = self.bias.clone();
        for (r, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (o, &wv) in out.iter_mut().zip(self.w.row(r)) {
                *o += xv * wv;
            }
        }
        out
    }

    /// Pre-activation scores for a sparse input.
    pub fn score_sparse(&self, x: &SparseDocVector) -> Vec<f64> {
        let mut out = self.bias.clone();
        for &(id, xv) in x.entries() {
            if (id as usize) < self.dim() {
                for (o, &wv) in out.iter_mut().zip(self.w.row(id as usize)) {
                    *o += xv * wv;
                }
            }
        }
        out
    }

    pub fn encode_dense(&self, x: &[f64]) -> HashCode {
        signs_to_code(&self.score_dense(x))
    }

    pub fn encode_sparse(&self, x: &SparseDocVector) -> HashCode {
        signs_to_code(&self.score_sparse(x))
    }
}

fn signs_to_code(scores: &[f64]) -> HashCode {
    let bits: Vec<i8> = scores.iter().map(|&s| if s >= 0.0 { 1 } else { -1 }).collect();
    HashCode::from_bits(&bits)
}

/// Linear classifier training knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    /// Hinge-loss penalty C.
    pub c: f64,
    /// Fixed number of coordinate-descent epochs.
    pub epochs: u32,
    /// Fit an intercept via an augmented constant feature.
    pub include_bias: bool,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            epochs: 40,
            include_bias: true,
            seed: 42,
        }
    }
}

/// Training output: the hash function plus per-bit training diagnostics.
#[derive(Debug, Clone)]
pub struct HashFnTraining {
    pub f: LinearHashFunction,
    /// Fraction of training documents each bit classifies correctly.
    pub train_accuracy: Vec<f64>,
    /// Bits whose code column was constant (degenerate classifiers).
    pub constant_bits: Vec<usize>,
}

impl HashFnTraining {
    pub fn mean_accuracy(&self) -> f64 {
        if self.train_accuracy.is_empty() {
            return 0.0;
        }
        self.train_accuracy.iter().sum::<f64>() / self.train_accuracy.len() as f64
    }
}

/// Trains one L2-regularized hinge-loss classifier per bit on the learned
/// codes, by dual coordinate descent with a seeded per-epoch permutation and
/// a fixed epoch budget. Constant code columns get a constant predictor.
pub fn train_hash_fn(
    omegas: &[FusedFeatureVector],
    codes: &CodeMatrix,
    config: &SvmConfig,
) -> Result<HashFnTraining> {
    let n = omegas.len();
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    if n != codes.n() {
        return Err(Error::LengthMismatch {
            left: n,
            right: codes.n(),
        });
    }
    if !(config.c > 0.0) {
        return Err(Error::invalid("C must be positive"));
    }
    let dim = omegas[0].len();
    if omegas.iter().any(|o| o.len() != dim) {
        return Err(Error::invalid("fused vectors must share a dimension"));
    }
    let l = codes.l();

    // Squared row norms, including the augmented bias feature.
    let bias_feat = if config.include_bias { 1.0 } else { 0.0 };
    let q_diag: Vec<f64> = omegas
        .iter()
        .map(|o| dot(o.as_slice(), o.as_slice()) + bias_feat * bias_feat)
        .collect();

    let mut w = DenseMat::zeros(dim, l);
    let mut bias = vec![0.0f64; l];
    let mut train_accuracy = Vec::with_capacity(l);
    let mut constant_bits = Vec::new();

    let mut order: Vec<usize> = (0..n).collect();
    for bit in 0..l {
        let labels: Vec<f64> = (0..n).map(|i| codes.bit(i, bit) as f64).collect();
        let first = labels[0];
        if labels.iter().all(|&y| y == first) {
            // Degenerate column: predict the constant. The intercept carries
            // the prediction even when bias fitting is disabled, otherwise
            // sgn(0) = +1 could not express an all-minus column.
            constant_bits.push(bit);
            bias[bit] = first;
            train_accuracy.push(1.0);
            continue;
        }

        let mut wb = vec![0.0f64; dim];
        let mut bb = 0.0f64;
        let mut alphas = vec![0.0f64; n];
        let mut r = rng(mix(mix(config.seed, SALT_SVM), bit as u64));
        for _epoch in 0..config.epochs {
            order.shuffle(&mut r);
            let mut max_violation = 0.0f64;
            for &i in &order {
                let qi = q_diag[i];
                if qi <= 0.0 {
                    continue; // empty feature vector carries no signal
                }
                let y = labels[i];
                let score = dot(&wb, omegas[i].as_slice()) + bb * bias_feat;
                let g = y * score - 1.0;
                let a = alphas[i];
                let violation = if a <= 0.0 {
                    g.min(0.0)
                } else if a >= config.c {
                    g.max(0.0)
                } else {
                    g
                };
                max_violation = max_violation.max(math::abs(violation));
                if math::abs(violation) < 1e-12 {
                    continue;
                }
                let new_a = (a - g / qi).clamp(0.0, config.c);
                let delta = new_a - a;
                if delta != 0.0 {
                    alphas[i] = new_a;
                    let dy = delta * y;
                    for (wv, xv) in wb.iter_mut().zip(omegas[i].as_slice()) {
                        *wv += dy * xv;
                    }
                    bb += dy * bias_feat;
                }
            }
            if max_violation < 1e-12 {
                break;
            }
        }

        let mut correct = 0usize;
        for (i, omega) in omegas.iter().enumerate() {
            let score = dot(&wb, omega.as_slice()) + bb * bias_feat;
            let pred = if score >= 0.0 { 1.0 } else { -1.0 };
            if pred == labels[i] {
                correct += 1;
            }
        }
        train_accuracy.push(correct as f64 / n as f64);
        for (row, &wv) in wb.iter().enumerate() {
            w.set(row, bit, wv);
        }
        bias[bit] = bb * bias_feat;
    }

    Ok(HashFnTraining {
        f: LinearHashFunction::new(w, bias),
        train_accuracy,
        constant_bits,
    })
}

/// Everything produced while fitting feature-level codes. The cached thetas
/// and fused vectors let callers train the hash function and check
/// self-consistency without re-running Gibbs inference.
#[derive(Debug, Clone)]
pub struct FeaFit {
    pub codes: CodeMatrix,
    pub embedding: Embedding,
    pub omegas: Vec<FusedFeatureVector>,
    /// Frozen training thetas, indexed `[chosen model][doc]`.
    pub thetas: Vec<Vec<TopicDistribution>>,
    /// Degrees of the affinity graph the embedding was computed on.
    pub degrees: Vec<f64>,
}

/// Learns training codes: fuse the selected granularities per document,
/// build the tag-confidence affinity graph over the fused vectors, embed via
/// Laplacian eigenmap, and binarize at the medians.
pub fn fit_codes_fea(
    c: &Corpus,
    sel: &SelectionResult,
    bank: &TopicModelBank,
    l: usize,
    params: AffinityParams,
    seed: u64,
) -> Result<FeaFit> {
    let models = chosen_models(bank, sel)?;
    let thetas: Vec<Vec<TopicDistribution>> = models
        .iter()
        .map(|m| infer_corpus_thetas(m, c, mix(mix(seed, SALT_FEA_THETA), m.k() as u64)))
        .collect();
    let omegas = fuse_all(&thetas, &sel.mu_hat, c.n())?;
    let graph = build_affinity(&omegas, c.tags(), params)?;
    let embedding = laplacian_eigenmap(&graph, l)?;
    let codes = median_binarize(&embedding);
    Ok(FeaFit {
        codes,
        embedding,
        omegas,
        thetas,
        degrees: graph.degrees(),
    })
}

/// Fuses per-model theta columns into one vector per document.
pub fn fuse_all(
    thetas: &[Vec<TopicDistribution>],
    mu_hat: &[f64],
    n: usize,
) -> Result<Vec<FusedFeatureVector>> {
    (0..n)
        .map(|i| {
            let per_doc: Vec<TopicDistribution> =
                thetas.iter().map(|m| m[i].clone()).collect();
            fuse(&per_doc, mu_hat)
        })
        .collect()
}

/// Resolves the selection's chosen granularities against the bank, in
/// selection order.
pub fn chosen_models<'a>(
    bank: &'a TopicModelBank,
    sel: &SelectionResult,
) -> Result<Vec<&'a TopicModel>> {
    sel.chosen
        .iter()
        .map(|&k| {
            bank.get(k)
                .ok_or_else(|| Error::invalid("selection references a granularity missing from the bank"))
        })
        .collect()
}

/// Trained feature-level encoder: the chosen topic models (in selection
/// order), their weights, and the per-bit classifiers.
#[derive(Debug, Clone)]
pub struct FeaEncoder {
    pub models: Vec<TopicModel>,
    pub mu_hat: Vec<f64>,
    pub hash: LinearHashFunction,
}

impl FeaEncoder {
    /// Encodes a query: infer per-granularity topics, fuse, apply the
    /// classifiers. Deterministic for a fixed seed.
    pub fn encode(&self, x: &SparseDocVector, seed: u64) -> Result<HashCode> {
        let refs: Vec<&TopicModel> = self.models.iter().collect();
        let thetas = infer_multi(&refs, x, seed);
        let omega = fuse(&thetas, &self.mu_hat)?;
        Ok(self.hash.encode_dense(omega.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMat;
    use crate::rng::rng;
    use crate::topics::TopicDistribution;

    fn dist(p: &[f64]) -> TopicDistribution {
        TopicDistribution::new(p.to_vec())
    }

    #[test]
    fn fuse_identity_with_unit_weight() {
        let theta = dist(&[0.25, 0.75]);
        let omega = fuse(&[theta.clone()], &[1.0]).unwrap();
        assert_eq!(omega.as_slice(), theta.as_slice());
    }

    #[test]
    fn fuse_lengths_and_segment_sums() {
        let thetas = vec![
            dist(&vec![0.1; 10]),
            dist(&vec![1.0 / 30.0; 30]),
            dist(&vec![0.02; 50]),
        ];
        let mu = [3.44, 1.7, 1.0];
        let omega = fuse(&thetas, &mu).unwrap();
        assert_eq!(omega.len(), 90);
        let seg1: f64 = omega.as_slice()[..10].iter().sum();
        let seg2: f64 = omega.as_slice()[10..40].iter().sum();
        let seg3: f64 = omega.as_slice()[40..].iter().sum();
        assert!((seg1 - 3.44).abs() < 1e-6);
        assert!((seg2 - 1.7).abs() < 1e-6);
        assert!((seg3 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fuse_rejects_mismatched_weights() {
        assert!(fuse(&[dist(&[1.0])], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn fuse_is_homogeneous() {
        let thetas = vec![dist(&[0.3, 0.7]), dist(&[0.5, 0.25, 0.25])];
        let mu = [2.0, 1.0];
        let base = fuse(&thetas, &mu).unwrap();
        let scaled_mu: Vec<f64> = mu.iter().map(|m| m * 3.0).collect();
        let scaled = fuse(&thetas, &scaled_mu).unwrap();
        for (a, b) in base.as_slice().iter().zip(scaled.as_slice()) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }

    fn omega_from(values: &[f64]) -> FusedFeatureVector {
        let norm = math::sqrt(dot(values, values));
        FusedFeatureVector {
            values: values.to_vec(),
            norm,
        }
    }

    #[test]
    fn zero_hash_function_yields_all_plus_one() {
        let f = LinearHashFunction::new(DenseMat::zeros(3, 4), vec![0.0; 4]);
        let code = f.encode_dense(&[0.5, 0.2, 0.3]);
        for j in 0..4 {
            assert!(code.bit(j));
        }
    }

    #[test]
    fn separable_codes_reach_full_training_accuracy() {
        // Two point clouds, one per code pattern; linearly separable.
        let mut omegas = Vec::new();
        let mut rows = Vec::new();
        let mut r = rng(5);
        use rand::Rng;
        for i in 0..40 {
            let (center, bits) = if i % 2 == 0 {
                ([1.0, 0.0], [1i8, -1])
            } else {
                ([0.0, 1.0], [-1, 1])
            };
            let jitter = r.gen::<f64>() * 0.1;
            omegas.push(omega_from(&[center[0] + jitter, center[1] - jitter]));
            rows.push(bits);
        }
        let y = DenseMat::from_fn(40, 2, |i, j| rows[i][j] as f64);
        let codes = crate::spectral::binarize_columns(&y);
        // binarize_columns of exact +-1 columns keeps the same signs.
        let training = train_hash_fn(&omegas, &codes, &SvmConfig::default()).unwrap();
        assert_eq!(training.train_accuracy, vec![1.0, 1.0]);
        assert!(training.constant_bits.is_empty());

        // And the encoder reproduces the training codes.
        for (i, omega) in omegas.iter().enumerate() {
            let code = training.f.encode_dense(omega.as_slice());
            for j in 0..2 {
                let want = codes.bit(i, j) > 0;
                assert_eq!(code.bit(j as u32), want, "doc {i} bit {j}");
            }
        }
    }

    #[test]
    fn constant_bit_column_predicts_the_constant() {
        // An all-equal embedding column binarizes to all -1.
        let const_codes = crate::spectral::binarize_columns(&DenseMat::from_fn(3, 1, |_, _| 2.0));
        let omegas = vec![
            omega_from(&[0.1, 0.9]),
            omega_from(&[0.8, 0.2]),
            omega_from(&[0.5, 0.5]),
        ];
        let training = train_hash_fn(&omegas, &const_codes, &SvmConfig::default()).unwrap();
        assert_eq!(training.constant_bits, vec![0]);
        for omega in &omegas {
            let code = training.f.encode_dense(omega.as_slice());
            assert!(!code.bit(0), "constant -1 column must predict -1");
        }
    }

    #[test]
    fn svm_training_is_deterministic() {
        let mut r = rng(8);
        use rand::Rng;
        let omegas: Vec<FusedFeatureVector> = (0..30)
            .map(|_| omega_from(&[r.gen::<f64>(), r.gen::<f64>(), r.gen::<f64>()]))
            .collect();
        let y = DenseMat::from_fn(30, 3, |_, _| r.gen::<f64>() - 0.5);
        let codes = crate::spectral::binarize_columns(&y);
        let t1 = train_hash_fn(&omegas, &codes, &SvmConfig::default()).unwrap();
        let t2 = train_hash_fn(&omegas, &codes, &SvmConfig::default()).unwrap();
        assert_eq!(t1.f, t2.f);
        assert_eq!(t1.train_accuracy, t2.train_accuracy);
    }

}
