//! Latent topic models trained by collapsed Gibbs sampling, at several
//! candidate granularities (topic counts).
//!
//! A trained [`TopicModel`] holds the smoothed topic-word matrix `phi` and is
//! immutable; topic inference for a document runs a short Gibbs chain with
//! `phi` held fixed and per-call RNG state, so concurrent inference on a
//! shared model is safe. All chains are seeded explicitly.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::corpus::{Corpus, SparseDocVector};
use crate::linalg::DenseMat;
use crate::math;
use crate::rng::{mix, rng};
use crate::{Error, Result};

const SALT_TRAIN_INIT: u64 = 0x6c64_6131;
const SALT_INFER: u64 = 0x6c64_6132;
const SALT_DOC: u64 = 0x6c64_6133;

/// Hyperparameters and chain lengths for training and inference.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaConfig {
    pub alpha: f64,
    pub beta: f64,
    pub train_iters: u32,
    /// Gibbs iterations `r` per inference call.
    pub infer_iters: u32,
    pub seed: u64,
    /// Record the per-sweep training log-likelihood (costly; off by default).
    pub track_loglik: bool,
    /// Average the topic estimate over this many final inference sweeps;
    /// 1 disables averaging.
    pub average_final: u32,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            alpha: 0.5,
            beta: 0.01,
            train_iters: 1000,
            infer_iters: 20,
            seed: 42,
            track_loglik: false,
            average_final: 5,
        }
    }
}

/// Per-document distribution over topics; strictly positive and summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicDistribution {
    p: Vec<f64>,
}

impl TopicDistribution {
    pub fn new(p: Vec<f64>) -> Self {
        TopicDistribution { p }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }
}

/// An LDA model at one granularity `K`.
#[derive(Debug, Clone)]
pub struct TopicModel {
    k: usize,
    d: usize,
    alpha: f64,
    beta: f64,
    /// K x d smoothed topic-word probabilities; rows sum to 1.
    phi: DenseMat,
    seed: u64,
    train_iters: u32,
    infer_iters: u32,
    average_final: u32,
    loglik_trace: Vec<f64>,
    warnings: Vec<String>,
}

impl TopicModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn train_iters(&self) -> u32 {
        self.train_iters
    }

    pub fn infer_iters(&self) -> u32 {
        self.infer_iters
    }

    pub fn average_final(&self) -> u32 {
        self.average_final
    }

    pub fn phi(&self) -> &DenseMat {
        &self.phi
    }

    pub fn loglik_trace(&self) -> &[f64] {
        &self.loglik_trace
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Reassembles a model from persisted parts; `phi` rows must be valid
    /// distributions.
    pub fn from_parts(
        phi: DenseMat,
        alpha: f64,
        beta: f64,
        seed: u64,
        train_iters: u32,
        infer_iters: u32,
        average_final: u32,
    ) -> Result<Self> {
        let k = phi.rows();
        let d = phi.cols();
        if k < 2 {
            return Err(Error::invalid("topic model needs K >= 2"));
        }
        for r in 0..k {
            let s: f64 = phi.row(r).iter().sum();
            if math::abs(s - 1.0) > 1e-6 {
                return Err(Error::invalid("phi rows must sum to 1"));
            }
        }
        Ok(TopicModel {
            k,
            d,
            alpha,
            beta,
            phi,
            seed,
            train_iters,
            infer_iters,
            average_final,
            loglik_trace: Vec::new(),
            warnings: Vec::new(),
        })
    }

    /// Highest-probability words per topic, `(term_id, probability)` pairs.
    pub fn top_words(&self, per_topic: usize) -> Vec<Vec<(u32, f64)>> {
        (0..self.k)
            .map(|t| {
                let mut row: Vec<(u32, f64)> = self
                    .phi
                    .row(t)
                    .iter()
                    .enumerate()
                    .map(|(w, &p)| (w as u32, p))
                    .collect();
                row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                row.truncate(per_topic);
                row
            })
            .collect()
    }

    /// Topic distribution for one document: `infer_iters` Gibbs sweeps with
    /// `phi` fixed, topic estimates averaged over the final sweeps.
    /// Deterministic for a fixed `seed`; empty or all-unknown documents get
    /// the uniform distribution.
    pub fn infer_theta(&self, x: &SparseDocVector, seed: u64) -> TopicDistribution {
        let tokens = expand_tokens(x, self.d);
        let k = self.k;
        if tokens.is_empty() {
            return TopicDistribution::new(vec![1.0 / k as f64; k]);
        }
        let mut r = rng(mix(seed, SALT_INFER));
        let len = tokens.len();
        let mut z = vec![0u32; len];
        let mut n_k = vec![0u32; k];
        for (i, _) in tokens.iter().enumerate() {
            let t = r.gen_range(0..k) as u32;
            z[i] = t;
            n_k[t as usize] += 1;
        }

        let iters = self.infer_iters.max(1);
        let avg_last = self.average_final.clamp(1, iters);
        let mut acc = vec![0.0f64; k];
        let mut weights = vec![0.0f64; k];
        for sweep in 0..iters {
            for (i, &w) in tokens.iter().enumerate() {
                let old = z[i] as usize;
                n_k[old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    let p = self.phi.at(t, w as usize) * (n_k[t] as f64 + self.alpha);
                    weights[t] = p;
                    total += p;
                }
                let new = sample_index(&weights, total, &mut r);
                z[i] = new as u32;
                n_k[new] += 1;
            }
            if sweep + avg_last >= iters {
                let denom = len as f64 + k as f64 * self.alpha;
                for t in 0..k {
                    acc[t] += (n_k[t] as f64 + self.alpha) / denom;
                }
            }
        }
        let mut theta: Vec<f64> = acc.iter().map(|a| a / avg_last as f64).collect();
        let total: f64 = theta.iter().sum();
        for t in &mut theta {
            *t /= total;
        }
        TopicDistribution::new(theta)
    }
}

/// Trains one LDA model with `iters` collapsed Gibbs sweeps; `phi` is
/// estimated from the final counts with beta smoothing.
pub fn train_lda(c: &Corpus, k: usize, config: &LdaConfig) -> Result<TopicModel> {
    if c.n() == 0 {
        return Err(Error::EmptyCorpus);
    }
    if k < 2 {
        return Err(Error::invalid("K must be at least 2"));
    }
    let d = c.d();
    let mut warnings = Vec::new();
    if k > d {
        warnings.push(format!("K={k} exceeds vocabulary size d={d}"));
    }

    // Expand documents to token streams; empty documents are skipped.
    let docs: Vec<Vec<u32>> = c
        .docs()
        .iter()
        .map(|doc| expand_tokens(doc, d))
        .filter(|t| !t.is_empty())
        .collect();

    let alpha = config.alpha;
    let beta = config.beta;
    let mut n_dk = vec![0u32; docs.len() * k];
    let mut n_kw = vec![0u32; k * d];
    let mut n_k = vec![0u32; k];
    let mut z: Vec<Vec<u32>> = docs.iter().map(|t| vec![0u32; t.len()]).collect();

    let mut r = rng(mix(config.seed, SALT_TRAIN_INIT));
    for (di, tokens) in docs.iter().enumerate() {
        for (i, &w) in tokens.iter().enumerate() {
            let t = r.gen_range(0..k);
            z[di][i] = t as u32;
            n_dk[di * k + t] += 1;
            n_kw[t * d + w as usize] += 1;
            n_k[t] += 1;
        }
    }

    let d_beta = d as f64 * beta;
    let mut weights = vec![0.0f64; k];
    let mut loglik_trace = Vec::new();
    for _sweep in 0..config.train_iters {
        for (di, tokens) in docs.iter().enumerate() {
            let dk = &mut n_dk[di * k..(di + 1) * k];
            for (i, &w) in tokens.iter().enumerate() {
                let old = z[di][i] as usize;
                dk[old] -= 1;
                n_kw[old * d + w as usize] -= 1;
                n_k[old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    let p = (n_kw[t * d + w as usize] as f64 + beta)
                        / (n_k[t] as f64 + d_beta)
                        * (dk[t] as f64 + alpha);
                    weights[t] = p;
                    total += p;
                }
                let new = sample_index(&weights, total, &mut r);
                z[di][i] = new as u32;
                dk[new] += 1;
                n_kw[new * d + w as usize] += 1;
                n_k[new] += 1;
            }
        }
        if config.track_loglik {
            loglik_trace.push(token_loglik(&docs, &n_dk, &n_kw, &n_k, k, d, alpha, beta));
        }
    }

    let mut phi = DenseMat::zeros(k, d);
    for t in 0..k {
        let denom = n_k[t] as f64 + d_beta;
        let row = phi.row_mut(t);
        for w in 0..d {
            row[w] = (n_kw[t * d + w] as f64 + beta) / denom;
        }
    }

    Ok(TopicModel {
        k,
        d,
        alpha,
        beta,
        phi,
        seed: config.seed,
        train_iters: config.train_iters,
        infer_iters: config.infer_iters,
        average_final: config.average_final,
        loglik_trace,
        warnings,
    })
}

/// Smoothed per-token predictive log-likelihood of the training data under
/// the current assignment counts.
#[allow(clippy::too_many_arguments)]
fn token_loglik(
    docs: &[Vec<u32>],
    n_dk: &[u32],
    n_kw: &[u32],
    n_k: &[u32],
    k: usize,
    d: usize,
    alpha: f64,
    beta: f64,
) -> f64 {
    let d_beta = d as f64 * beta;
    let k_alpha = k as f64 * alpha;
    let mut ll = 0.0;
    for (di, tokens) in docs.iter().enumerate() {
        let len = tokens.len() as f64;
        let dk = &n_dk[di * k..(di + 1) * k];
        for &w in tokens {
            let mut p = 0.0;
            for t in 0..k {
                let theta = (dk[t] as f64 + alpha) / (len + k_alpha);
                let phi = (n_kw[t * d + w as usize] as f64 + beta) / (n_k[t] as f64 + d_beta);
                p += theta * phi;
            }
            ll += math::ln(p);
        }
    }
    ll
}

/// Bank of topic models at distinct granularities, ordered by ascending `K`.
#[derive(Debug, Clone)]
pub struct TopicModelBank {
    models: Vec<TopicModel>,
}

impl TopicModelBank {
    pub fn from_models(mut models: Vec<TopicModel>) -> Result<Self> {
        models.sort_by_key(|m| m.k());
        for pair in models.windows(2) {
            if pair[0].k() == pair[1].k() {
                return Err(Error::invalid("bank granularities must be unique"));
            }
        }
        Ok(TopicModelBank { models })
    }

    pub fn models(&self) -> &[TopicModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn get(&self, k: usize) -> Option<&TopicModel> {
        self.models.iter().find(|m| m.k() == k)
    }
}

/// Trains one model per granularity in `ks`. Seeds are derived as
/// `base_seed + K`, so the chains are independent but reproducible.
pub fn train_bank(c: &Corpus, ks: &[usize], config: &LdaConfig) -> Result<TopicModelBank> {
    let mut sorted = ks.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != ks.len() {
        return Err(Error::invalid("candidate granularities must be unique"));
    }
    let mut models = Vec::with_capacity(sorted.len());
    for &k in &sorted {
        let cfg = LdaConfig {
            seed: config.seed.wrapping_add(k as u64),
            ..config.clone()
        };
        models.push(train_lda(c, k, &cfg)?);
    }
    TopicModelBank::from_models(models)
}

/// Topic distributions of `x` under each model, in the given order. Per-model
/// chains get independent seeds derived from `seed` and the model's `K`.
pub fn infer_multi(models: &[&TopicModel], x: &SparseDocVector, seed: u64) -> Vec<TopicDistribution> {
    models
        .iter()
        .map(|m| m.infer_theta(x, mix(seed, m.k() as u64)))
        .collect()
}

/// Topic distributions for every document of a corpus under one model.
pub fn infer_corpus_thetas(model: &TopicModel, c: &Corpus, seed: u64) -> Vec<TopicDistribution> {
    c.docs()
        .iter()
        .enumerate()
        .map(|(i, doc)| model.infer_theta(doc, mix(mix(seed, SALT_DOC), i as u64)))
        .collect()
}

/// Expands a count vector into a token stream, dropping ids outside the
/// model's vocabulary; fractional weights are rounded to counts.
fn expand_tokens(x: &SparseDocVector, d: usize) -> Vec<u32> {
    let mut tokens = Vec::with_capacity(x.token_count() as usize);
    for &(id, w) in x.entries() {
        if (id as usize) < d {
            let count = if w < 1.0 { 1 } else { (w + 0.5) as usize };
            for _ in 0..count {
                tokens.push(id);
            }
        }
    }
    tokens
}

/// Draws an index proportional to `weights` (which sum to `total`).
#[inline]
fn sample_index(weights: &[f64], total: f64, r: &mut impl Rng) -> usize {
    let u = r.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u <= acc {
            return i;
        }
    }
    weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusBuilder, Tokenizer};

    fn planted_two_cluster_corpus() -> Corpus {
        // Two disjoint word clusters; docs draw from exactly one.
        let tok = Tokenizer::new();
        let mut b = CorpusBuilder::new();
        let cluster_a = ["a0", "a1", "a2", "a3", "a4"];
        let cluster_b = ["b0", "b1", "b2", "b3", "b4"];
        let mut r = rng(900);
        for i in 0..60 {
            let cluster: &[&str] = if i % 2 == 0 { &cluster_a } else { &cluster_b };
            let mut text = String::new();
            for _ in 0..12 {
                text.push_str(cluster[r.gen_range(0..cluster.len())]);
                text.push(' ');
            }
            b.add_doc(&tok.tokenize(&text), &[] as &[&str]);
        }
        b.build()
    }

    fn fast_config(seed: u64) -> LdaConfig {
        LdaConfig {
            train_iters: 200,
            seed,
            ..LdaConfig::default()
        }
    }

    #[test]
    fn phi_rows_sum_to_one() {
        let c = planted_two_cluster_corpus();
        let m = train_lda(&c, 2, &fast_config(1)).unwrap();
        for t in 0..2 {
            let s: f64 = m.phi().row(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn phi_rows_sum_to_one_on_single_doc() {
        let tok = Tokenizer::new();
        let mut b = CorpusBuilder::new();
        b.add_doc(&tok.tokenize("x y z"), &[] as &[&str]);
        let m = train_lda(&b.build(), 2, &fast_config(2)).unwrap();
        for t in 0..2 {
            let s: f64 = m.phi().row(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn planted_clusters_recovered() {
        let c = planted_two_cluster_corpus();
        let m = train_lda(&c, 2, &fast_config(3)).unwrap();
        // Each topic's top-5 words should come from a single cluster.
        let a_ids: Vec<u32> = ["a0", "a1", "a2", "a3", "a4"]
            .iter()
            .map(|w| c.vocab().id(w).unwrap())
            .collect();
        for top in m.top_words(5) {
            let in_a = top.iter().filter(|(id, _)| a_ids.contains(id)).count();
            let purity = in_a.max(5 - in_a) as f64 / 5.0;
            assert!(purity >= 0.9, "topic purity {purity}");
        }
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let c = planted_two_cluster_corpus();
        let m1 = train_lda(&c, 3, &fast_config(7)).unwrap();
        let m2 = train_lda(&c, 3, &fast_config(7)).unwrap();
        assert_eq!(m1.phi().data(), m2.phi().data());
    }

    #[test]
    fn loglik_trend_improves() {
        let c = planted_two_cluster_corpus();
        let cfg = LdaConfig {
            track_loglik: true,
            train_iters: 100,
            seed: 5,
            ..LdaConfig::default()
        };
        let m = train_lda(&c, 2, &cfg).unwrap();
        let trace = m.loglik_trace();
        assert_eq!(trace.len(), 100);
        let tenth = trace.len() / 10;
        let first: f64 = trace[..tenth].iter().sum::<f64>() / tenth as f64;
        let last: f64 = trace[trace.len() - tenth..].iter().sum::<f64>() / tenth as f64;
        assert!(last >= first, "log-likelihood trend fell: {first} -> {last}");
    }

    #[test]
    fn infer_empty_doc_is_uniform() {
        let c = planted_two_cluster_corpus();
        let m = train_lda(&c, 4, &fast_config(11)).unwrap();
        let theta = m.infer_theta(&SparseDocVector::empty(), 99);
        for &p in theta.as_slice() {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn infer_is_deterministic_and_positive() {
        let c = planted_two_cluster_corpus();
        let m = train_lda(&c, 2, &fast_config(13)).unwrap();
        let x = c.doc(0);
        let t1 = m.infer_theta(x, 123);
        let t2 = m.infer_theta(x, 123);
        assert_eq!(t1, t2);
        let s: f64 = t1.as_slice().iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(t1.as_slice().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn infer_concentrates_on_planted_topic() {
        let c = planted_two_cluster_corpus();
        let m = train_lda(&c, 2, &fast_config(17)).unwrap();
        // A document made purely of cluster-A words.
        let tok = Tokenizer::new();
        let x = c.query_counts(&tok.tokenize("a0 a1 a2 a3 a4 a0 a1 a2 a3 a4"));
        let theta = m.infer_theta(&x, 7);
        let max = theta.as_slice().iter().cloned().fold(0.0, f64::max);
        assert!(max > 0.8, "theta not concentrated: {max}");
    }

    #[test]
    fn bank_orders_and_rejects_duplicates() {
        let c = planted_two_cluster_corpus();
        let cfg = LdaConfig {
            train_iters: 20,
            ..LdaConfig::default()
        };
        let bank = train_bank(&c, &[8, 2, 4], &cfg).unwrap();
        let ks: Vec<usize> = bank.models().iter().map(|m| m.k()).collect();
        assert_eq!(ks, alloc::vec![2, 4, 8]);
        assert!(train_bank(&c, &[4, 4], &cfg).is_err());
    }

    #[test]
    fn infer_multi_preserves_order_and_lengths() {
        let c = planted_two_cluster_corpus();
        let cfg = LdaConfig {
            train_iters: 20,
            ..LdaConfig::default()
        };
        let bank = train_bank(&c, &[2, 4, 8], &cfg).unwrap();
        let refs: Vec<&TopicModel> = bank.models().iter().collect();
        let thetas = infer_multi(&refs, c.doc(0), 5);
        let lens: Vec<usize> = thetas.iter().map(|t| t.len()).collect();
        assert_eq!(lens, alloc::vec![2, 4, 8]);
        assert!(infer_multi(&[], c.doc(0), 5).is_empty());
        assert_eq!(thetas, infer_multi(&refs, c.doc(0), 5));
    }

    #[test]
    fn shared_model_inference_is_concurrent_safe() {
        let c = planted_two_cluster_corpus();
        let m = train_lda(&c, 2, &fast_config(29)).unwrap();
        let expected = m.infer_theta(c.doc(0), 31);
        let model = std::sync::Arc::new(m);
        let corpus = std::sync::Arc::new(c);
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let model = model.clone();
                let corpus = corpus.clone();
                std::thread::spawn(move || model.infer_theta(corpus.doc(0), 31))
            })
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), expected);
        }
    }

    #[test]
    fn oversized_k_warns_but_trains() {
        let tok = Tokenizer::new();
        let mut b = CorpusBuilder::new();
        b.add_doc(&tok.tokenize("p q"), &[] as &[&str]);
        b.add_doc(&tok.tokenize("q p"), &[] as &[&str]);
        let m = train_lda(&b.build(), 5, &fast_config(23)).unwrap();
        assert!(!m.warnings().is_empty());
    }
}
