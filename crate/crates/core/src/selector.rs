//! Selection of the optimal topic granularities.
//!
//! Candidate granularities are scored by how well their topic distributions
//! separate tag-sharing neighbors from non-sharing neighbors: for a sampled
//! document, each candidate earns the mean symmetric KL divergence to its
//! nearest non-sharing neighbors minus the mean to its nearest tag-sharing
//! neighbors (a Relief-style update). The top-M candidates win, and their
//! weights are normalized so the smallest chosen weight is exactly 1.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::corpus::{cosine, tfidf_transform, Corpus};
use crate::math;
use crate::rng::{mix, rng};
use crate::topics::{infer_corpus_thetas, TopicDistribution, TopicModelBank};
use crate::{Error, Result};

const SALT_SAMPLE: u64 = 0x7265_6c31;
const SALT_THETA: u64 = 0x7265_6c32;

/// Symmetric Kullback-Leibler divergence between two strictly positive
/// distributions of equal length:
/// `1/2 * sum_k [p_k ln(p_k/q_k) + q_k ln(q_k/p_k)]`.
pub fn symmetric_kl(p: &TopicDistribution, q: &TopicDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let mut acc = 0.0;
    for (&pk, &qk) in p.as_slice().iter().zip(q.as_slice()) {
        acc += pk * math::ln(pk / qk) + qk * math::ln(qk / pk);
    }
    Ok(0.5 * acc)
}

/// Which document representation drives the nearest-neighbor search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeywordSpace {
    /// tf-idf weighted cosine (default).
    #[default]
    Tfidf,
    /// Raw term-count cosine.
    Counts,
}

/// Knobs for [`relief_weights`].
#[derive(Debug, Clone)]
pub struct ReliefConfig {
    /// Sample size per tag ("m"): up to this many documents per category.
    pub sample_per_tag: usize,
    /// Neighbor count `k` per side.
    pub neighbors: usize,
    pub seed: u64,
    pub keyword_space: KeywordSpace,
}

impl Default for ReliefConfig {
    fn default() -> Self {
        ReliefConfig {
            sample_per_tag: 100,
            neighbors: 10,
            seed: 42,
            keyword_space: KeywordSpace::Tfidf,
        }
    }
}

/// Relief weights of the candidate granularities.
#[derive(Debug, Clone, PartialEq)]
pub struct GranularityWeights {
    /// `(K, weight)` pairs in ascending `K` order.
    weights: Vec<(usize, f64)>,
    pub sample_size: usize,
    pub neighbors: usize,
}

impl GranularityWeights {
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.weights
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        self.weights.iter().find(|(kk, _)| *kk == k).map(|e| e.1)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Scores every candidate model in the bank.
///
/// For each sampled tagged document, the `k` nearest tag-sharing documents
/// and `k` nearest non-sharing documents are found by keyword-space cosine
/// over the full corpus; when fewer than `k` neighbors exist on a side the
/// available ones are used and the mean divides by the actual count.
pub fn relief_weights(
    c: &Corpus,
    bank: &TopicModelBank,
    config: &ReliefConfig,
) -> Result<GranularityWeights> {
    if c.n() == 0 {
        return Err(Error::EmptyCorpus);
    }
    if !c.has_any_tags() {
        return Err(Error::NoTags);
    }
    if bank.is_empty() {
        return Err(Error::invalid("bank has no candidate models"));
    }
    if config.neighbors == 0 {
        return Err(Error::invalid("neighbor count must be positive"));
    }

    let keyword: Corpus;
    let search_docs = match config.keyword_space {
        KeywordSpace::Tfidf => {
            keyword = tfidf_transform(c)?;
            keyword.docs()
        }
        KeywordSpace::Counts => c.docs(),
    };

    // Stratified sample: up to `sample_per_tag` documents per tag id.
    let q = c.tag_registry().len();
    let mut sampled: Vec<usize> = Vec::new();
    let mut picked = alloc::vec![false; c.n()];
    for tag in 0..q as u32 {
        let mut members: Vec<usize> = (0..c.n())
            .filter(|&i| c.tags()[i].ids().contains(&tag))
            .collect();
        let mut r = rng(mix(mix(config.seed, SALT_SAMPLE), tag as u64));
        members.shuffle(&mut r);
        for &i in members.iter().take(config.sample_per_tag) {
            if !picked[i] {
                picked[i] = true;
                sampled.push(i);
            }
        }
    }
    sampled.sort_unstable();

    // Thetas for every document under every candidate, computed up front.
    let all_thetas: Vec<Vec<TopicDistribution>> = bank
        .models()
        .iter()
        .map(|m| infer_corpus_thetas(m, c, mix(mix(config.seed, SALT_THETA), m.k() as u64)))
        .collect();

    let k = config.neighbors;
    let mut mu = alloc::vec![0.0f64; bank.len()];
    for &i in &sampled {
        let (hits, misses) = nearest_split(search_docs, c, i, k);
        for (mi, thetas) in all_thetas.iter().enumerate() {
            let theta_i = &thetas[i];
            let mut delta = 0.0;
            if !misses.is_empty() {
                let sum: f64 = misses
                    .iter()
                    .map(|&j| symmetric_kl(theta_i, &thetas[j]).expect("equal lengths"))
                    .sum();
                delta += sum / misses.len() as f64;
            }
            if !hits.is_empty() {
                let sum: f64 = hits
                    .iter()
                    .map(|&j| symmetric_kl(theta_i, &thetas[j]).expect("equal lengths"))
                    .sum();
                delta -= sum / hits.len() as f64;
            }
            mu[mi] += delta;
        }
    }

    let weights = bank
        .models()
        .iter()
        .zip(mu)
        .map(|(m, w)| (m.k(), w))
        .collect();
    Ok(GranularityWeights {
        weights,
        sample_size: config.sample_per_tag,
        neighbors: k,
    })
}

/// k nearest tag-sharing and non-sharing neighbors of document `i` by cosine.
/// Ties break on the smaller document id; documents with empty tag sets count
/// as non-sharing.
fn nearest_split(
    docs: &[crate::corpus::SparseDocVector],
    c: &Corpus,
    i: usize,
    k: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut hits: Vec<(f64, usize)> = Vec::new();
    let mut misses: Vec<(f64, usize)> = Vec::new();
    let ti = &c.tags()[i];
    for j in 0..docs.len() {
        if j == i {
            continue;
        }
        let sim = cosine(&docs[i], &docs[j]);
        let bucket = if ti.intersects(&c.tags()[j]) {
            &mut hits
        } else {
            &mut misses
        };
        bucket.push((sim, j));
    }
    let top = |mut v: Vec<(f64, usize)>| -> Vec<usize> {
        v.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        v.truncate(k);
        v.into_iter().map(|(_, j)| j).collect()
    };
    (top(hits), top(misses))
}

/// The chosen granularities with raw and normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Chosen `K` values ordered by weight, descending.
    pub chosen: Vec<usize>,
    /// Raw Relief weights, parallel to `chosen`.
    pub mu: Vec<f64>,
    /// Normalized weights: `mu / min(chosen mu)`, so the minimum is exactly 1.
    pub mu_hat: Vec<f64>,
    /// Sum of the chosen `K` values.
    pub k_tilde: usize,
}

/// Greedily picks the `m` highest-weight candidates (ties prefer the smaller
/// `K`) and normalizes their weights by the smallest chosen one.
///
/// When the smallest chosen weight is not positive the ratio normalization is
/// meaningless, so the normalized weights fall back to all ones.
pub fn select_top(w: &GranularityWeights, m: usize) -> Result<SelectionResult> {
    if m == 0 {
        return Err(Error::invalid("must select at least one granularity"));
    }
    if m > w.len() {
        return Err(Error::invalid("cannot select more candidates than exist"));
    }
    let mut order: Vec<(usize, f64)> = w.entries().to_vec();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order.truncate(m);

    let chosen: Vec<usize> = order.iter().map(|e| e.0).collect();
    let mu: Vec<f64> = order.iter().map(|e| e.1).collect();
    let min = mu.iter().cloned().fold(f64::INFINITY, f64::min);
    let mu_hat: Vec<f64> = if min > 0.0 {
        mu.iter().map(|v| v / min).collect()
    } else {
        alloc::vec![1.0; mu.len()]
    };
    let k_tilde = chosen.iter().sum();
    Ok(SelectionResult {
        chosen,
        mu,
        mu_hat,
        k_tilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusBuilder, Tokenizer};
    use crate::topics::{train_bank, LdaConfig};

    fn dist(p: &[f64]) -> TopicDistribution {
        TopicDistribution::new(p.to_vec())
    }

    #[test]
    fn kl_zero_on_identical() {
        let p = dist(&[0.3, 0.7]);
        assert_eq!(symmetric_kl(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_known_value() {
        // 0.5 * [0.5 ln2 + 0.5 ln(2/3) + 0.25 ln(1/2) + 0.75 ln(3/2)]
        let p = dist(&[0.5, 0.5]);
        let q = dist(&[0.25, 0.75]);
        let v = symmetric_kl(&p, &q).unwrap();
        assert!((v - 0.13732653608351372).abs() < 1e-4, "got {v}");
    }

    #[test]
    fn kl_symmetric_by_construction() {
        let mut r = rng(3);
        use rand::Rng;
        for _ in 0..50 {
            let raw: Vec<f64> = (0..8).map(|_| r.gen::<f64>() + 0.01).collect();
            let s: f64 = raw.iter().sum();
            let p = dist(&raw.iter().map(|v| v / s).collect::<Vec<_>>());
            let raw2: Vec<f64> = (0..8).map(|_| r.gen::<f64>() + 0.01).collect();
            let s2: f64 = raw2.iter().sum();
            let q = dist(&raw2.iter().map(|v| v / s2).collect::<Vec<_>>());
            let a = symmetric_kl(&p, &q).unwrap();
            let b = symmetric_kl(&q, &p).unwrap();
            assert_eq!(a, b);
            assert!(a >= 0.0);
        }
    }

    #[test]
    fn kl_rejects_length_mismatch() {
        let p = dist(&[0.5, 0.5]);
        let q = dist(&[1.0]);
        assert!(symmetric_kl(&p, &q).is_err());
    }

    #[test]
    fn select_top_matches_hand_example() {
        let w = GranularityWeights {
            weights: alloc::vec![(10, 3.44), (30, 1.7), (50, 1.0), (70, 0.5)],
            sample_size: 100,
            neighbors: 10,
        };
        let sel = select_top(&w, 3).unwrap();
        assert_eq!(sel.chosen, alloc::vec![10, 30, 50]);
        assert_eq!(sel.mu_hat, alloc::vec![3.44, 1.7, 1.0]);
        assert_eq!(sel.k_tilde, 90);
    }

    #[test]
    fn select_top_tie_breaks_on_smaller_k() {
        let w = GranularityWeights {
            weights: alloc::vec![(10, 2.0), (30, 2.0), (50, 2.0)],
            sample_size: 1,
            neighbors: 1,
        };
        let sel = select_top(&w, 2).unwrap();
        assert_eq!(sel.chosen, alloc::vec![10, 30]);
        assert_eq!(sel.mu_hat, alloc::vec![1.0, 1.0]);
    }

    #[test]
    fn select_top_full_set_orders_by_weight() {
        let w = GranularityWeights {
            weights: alloc::vec![(10, 0.5), (30, 2.5), (50, 1.5)],
            sample_size: 1,
            neighbors: 1,
        };
        let sel = select_top(&w, 3).unwrap();
        assert_eq!(sel.chosen, alloc::vec![30, 50, 10]);
        assert!(select_top(&w, 4).is_err());
    }

    #[test]
    fn select_top_normalization_invariant_under_scaling() {
        let base = alloc::vec![(10, 3.0), (30, 2.0), (50, 1.0)];
        let w1 = GranularityWeights {
            weights: base.clone(),
            sample_size: 1,
            neighbors: 1,
        };
        let w2 = GranularityWeights {
            weights: base.iter().map(|&(k, v)| (k, v * 7.5)).collect(),
            sample_size: 1,
            neighbors: 1,
        };
        let s1 = select_top(&w1, 2).unwrap();
        let s2 = select_top(&w2, 2).unwrap();
        assert_eq!(s1.chosen, s2.chosen);
        for (a, b) in s1.mu_hat.iter().zip(&s2.mu_hat) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(*s1.mu_hat.last().unwrap(), 1.0);
    }

    fn tagged_corpus() -> Corpus {
        // Two tag classes with disjoint vocabularies.
        let tok = Tokenizer::new();
        let mut b = CorpusBuilder::new();
        let mut r = rng(41);
        use rand::Rng;
        for i in 0..40 {
            let (words, tag): (&[&str], &str) = if i % 2 == 0 {
                (&["u0", "u1", "u2", "u3"], "left")
            } else {
                (&["v0", "v1", "v2", "v3"], "right")
            };
            let mut text = String::new();
            for _ in 0..10 {
                text.push_str(words[r.gen_range(0..words.len())]);
                text.push(' ');
            }
            b.add_doc(&tok.tokenize(&text), &[tag]);
        }
        b.build()
    }

    #[test]
    fn relief_rejects_untagged_corpus() {
        let tok = Tokenizer::new();
        let mut b = CorpusBuilder::new();
        b.add_doc(&tok.tokenize("a b"), &[] as &[&str]);
        b.add_doc(&tok.tokenize("b c"), &[] as &[&str]);
        let c = b.build();
        let cfg = LdaConfig {
            train_iters: 10,
            ..LdaConfig::default()
        };
        let bank = train_bank(&c, &[2], &cfg).unwrap();
        assert_eq!(
            relief_weights(&c, &bank, &ReliefConfig::default()),
            Err(Error::NoTags)
        );
    }

    #[test]
    fn relief_singleton_bank_is_finite_and_deterministic() {
        let c = tagged_corpus();
        let cfg = LdaConfig {
            train_iters: 50,
            ..LdaConfig::default()
        };
        let bank = train_bank(&c, &[2], &cfg).unwrap();
        let rc = ReliefConfig {
            sample_per_tag: 5,
            neighbors: 3,
            seed: 9,
            ..ReliefConfig::default()
        };
        let w1 = relief_weights(&c, &bank, &rc).unwrap();
        let w2 = relief_weights(&c, &bank, &rc).unwrap();
        assert_eq!(w1, w2);
        assert_eq!(w1.len(), 1);
        assert!(w1.entries()[0].1.is_finite());
    }

    #[test]
    fn relief_prefers_discriminating_granularity() {
        let c = tagged_corpus();
        let cfg = LdaConfig {
            train_iters: 150,
            ..LdaConfig::default()
        };
        let bank = train_bank(&c, &[2, 8], &cfg).unwrap();
        let rc = ReliefConfig {
            sample_per_tag: 10,
            neighbors: 5,
            seed: 4,
            ..ReliefConfig::default()
        };
        let w = relief_weights(&c, &bank, &rc).unwrap();
        // K=2 separates the two disjoint-vocabulary classes crisply.
        assert!(w.get(2).unwrap() > 0.0);
    }

    #[test]
    fn relief_weight_zero_when_thetas_identical() {
        // A model whose theta is identical for every document contributes
        // zero divergence everywhere.
        let c = tagged_corpus();
        let phi = crate::linalg::DenseMat::from_fn(2, c.d(), |_, _| 1.0 / c.d() as f64);
        let model =
            crate::topics::TopicModel::from_parts(phi, 0.5, 0.01, 1, 0, 0, 1).unwrap();
        // With zero inference iterations and uniform phi, every theta is the
        // smoothing-only estimate for its length... lengths differ, so force
        // the stronger condition via empty docs.
        let tok = Tokenizer::new();
        let mut b = CorpusBuilder::new();
        for i in 0..10 {
            b.add_doc(
                &tok.tokenize(""),
                &[if i % 2 == 0 { "l" } else { "r" }],
            );
        }
        let empty_docs = b.build();
        let bank = TopicModelBank::from_models(alloc::vec![model]).unwrap();
        let rc = ReliefConfig {
            sample_per_tag: 5,
            neighbors: 2,
            seed: 1,
            keyword_space: KeywordSpace::Counts,
            ..ReliefConfig::default()
        };
        let w = relief_weights(&empty_docs, &bank, &rc).unwrap();
        assert_eq!(w.entries()[0].1, 0.0);
    }
}
