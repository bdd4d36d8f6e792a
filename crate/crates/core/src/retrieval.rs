//! Packed-bit Hamming index, radius/top-K search, the retrieval evaluation
//! harness, and a random-projection LSH baseline.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::corpus::{Corpus, TagSet};
use crate::fuse_feature::LinearHashFunction;
use crate::linalg::DenseMat;
use crate::math;
use crate::rng::{mix, rng};
use crate::{Error, Result};

const SALT_LSH: u64 = 0x6c73_6831;

/// An `l`-bit binary code packed into 64-bit words, little-endian within
/// words: bit `j` of the code is `words[j / 64] >> (j % 64) & 1`, storing
/// `(y_j + 1) / 2`. Bits beyond `l` are zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HashCode {
    words: Vec<u64>,
    l: u32,
}

impl HashCode {
    /// Packs a `{-1, +1}` bit row.
    pub fn from_bits(bits: &[i8]) -> HashCode {
        let l = bits.len() as u32;
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (j, &b) in bits.iter().enumerate() {
            if b > 0 {
                words[j / 64] |= 1u64 << (j % 64);
            }
        }
        HashCode { words, l }
    }

    /// Rebuilds a code from raw words; bits beyond `l` must be zero.
    pub fn from_words(words: Vec<u64>, l: u32) -> Result<HashCode> {
        if words.len() != (l as usize).div_ceil(64) {
            return Err(Error::invalid("word count does not match bit count"));
        }
        let tail = l as usize % 64;
        if tail != 0 {
            let mask = !0u64 << tail;
            if words.last().is_some_and(|w| w & mask != 0) {
                return Err(Error::invalid("bits beyond l must be zero"));
            }
        }
        Ok(HashCode { words, l })
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, j: u32) -> bool {
        self.words[(j / 64) as usize] >> (j % 64) & 1 == 1
    }
}

/// Hamming distance: popcount of the XOR of the packed words.
pub fn hamming(a: &HashCode, b: &HashCode) -> Result<u32> {
    if a.l != b.l {
        return Err(Error::LengthMismatch {
            left: a.l as usize,
            right: b.l as usize,
        });
    }
    Ok(a.words
        .iter()
        .zip(&b.words)
        .map(|(x, y)| (x ^ y).count_ones())
        .sum())
}

/// Immutable linear-scan index over the training codes.
#[derive(Debug, Clone)]
pub struct HammingIndex {
    codes: Vec<HashCode>,
    l: u32,
}

impl HammingIndex {
    pub fn new(codes: Vec<HashCode>) -> Result<HammingIndex> {
        let l = codes.first().map(|c| c.l).unwrap_or(0);
        if codes.iter().any(|c| c.l != l) {
            return Err(Error::invalid("all indexed codes must share a bit width"));
        }
        Ok(HammingIndex { codes, l })
    }

    pub fn n(&self) -> usize {
        self.codes.len()
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn codes(&self) -> &[HashCode] {
        &self.codes
    }
}

/// All documents within Hamming distance `r` of the query, sorted by
/// distance then document id.
pub fn search_radius(idx: &HammingIndex, q: &HashCode, r: u32) -> Result<Vec<(u32, u32)>> {
    if r > idx.l {
        return Err(Error::invalid("radius exceeds the code width"));
    }
    let mut out = Vec::new();
    for (id, code) in idx.codes.iter().enumerate() {
        let d = hamming(code, q)?;
        if d <= r {
            out.push((id as u32, d));
        }
    }
    out.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

/// The `k` documents closest to the query, ties broken by document id,
/// sorted by distance then id.
pub fn search_topk(idx: &HammingIndex, q: &HashCode, k: usize) -> Result<Vec<(u32, u32)>> {
    if k > idx.n() {
        return Err(Error::invalid("top-K exceeds the index size"));
    }
    let mut all: Vec<(u32, u32)> = Vec::with_capacity(idx.n());
    for (id, code) in idx.codes.iter().enumerate() {
        all.push((id as u32, hamming(code, q)?));
    }
    all.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    Ok(all)
}

/// How the per-query precision/recall columns are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Mean of per-query values (default).
    #[default]
    MacroOverQueries,
    /// Pool raw counts across queries before dividing.
    MicroPooled,
}

/// Retrieval quality for one bit width.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub bits: u32,
    /// Precision of radius retrieval under the chosen pooling.
    pub precision: f64,
    /// Recall of radius retrieval under the chosen pooling.
    pub recall: f64,
    /// Mean over queries of precision among the top-K results.
    pub mp_topk: f64,
    /// Mean over queries of precision within the radius (zero-retrieval
    /// queries contribute 0).
    pub mp_radius: f64,
    /// Queries whose radius search returned nothing.
    pub empty_queries: usize,
    /// Queries skipped for having no tags.
    pub skipped_untagged: usize,
    /// Tagged queries with no relevant document in the index.
    pub skipped_no_relevant: usize,
    pub queries_evaluated: usize,
}

/// Sweep of [`EvalRow`]s across bit widths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

/// Evaluates codes against the shared-tag relevance rule: a retrieved
/// document is relevant iff its tag set intersects the query's.
pub fn evaluate(
    index: &HammingIndex,
    train_tags: &[TagSet],
    test_codes: &[HashCode],
    test_tags: &[TagSet],
    radius: u32,
    topk: usize,
    pooling: Pooling,
) -> Result<EvalRow> {
    if index.n() != train_tags.len() {
        return Err(Error::LengthMismatch {
            left: index.n(),
            right: train_tags.len(),
        });
    }
    if test_codes.len() != test_tags.len() {
        return Err(Error::LengthMismatch {
            left: test_codes.len(),
            right: test_tags.len(),
        });
    }

    let mut skipped_untagged = 0;
    let mut skipped_no_relevant = 0;
    let mut empty_queries = 0;
    let mut queries = 0usize;
    let mut sum_prec = 0.0;
    let mut sum_recall = 0.0;
    let mut sum_mp_topk = 0.0;
    let mut pooled_rel = 0usize;
    let mut pooled_retrieved = 0usize;
    let mut pooled_relevant_total = 0usize;

    for (code, tags) in test_codes.iter().zip(test_tags) {
        if tags.is_empty() {
            skipped_untagged += 1;
            continue;
        }
        let relevant_total = train_tags.iter().filter(|t| t.intersects(tags)).count();
        if relevant_total == 0 {
            skipped_no_relevant += 1;
            continue;
        }
        queries += 1;

        let within = search_radius(index, code, radius)?;
        let retrieved = within.len();
        let rel_retrieved = within
            .iter()
            .filter(|&&(id, _)| train_tags[id as usize].intersects(tags))
            .count();
        if retrieved == 0 {
            empty_queries += 1;
        } else {
            sum_prec += rel_retrieved as f64 / retrieved as f64;
        }
        sum_recall += rel_retrieved as f64 / relevant_total as f64;
        pooled_rel += rel_retrieved;
        pooled_retrieved += retrieved;
        pooled_relevant_total += relevant_total;

        let top = search_topk(index, code, topk.min(index.n()))?;
        let rel_top = top
            .iter()
            .filter(|&&(id, _)| train_tags[id as usize].intersects(tags))
            .count();
        if !top.is_empty() {
            sum_mp_topk += rel_top as f64 / top.len() as f64;
        }
    }

    let qf = queries as f64;
    let mp_radius = if queries > 0 { sum_prec / qf } else { 0.0 };
    let mp_topk = if queries > 0 { sum_mp_topk / qf } else { 0.0 };
    let (precision, recall) = match pooling {
        Pooling::MacroOverQueries => (mp_radius, if queries > 0 { sum_recall / qf } else { 0.0 }),
        Pooling::MicroPooled => (
            if pooled_retrieved > 0 {
                pooled_rel as f64 / pooled_retrieved as f64
            } else {
                0.0
            },
            if pooled_relevant_total > 0 {
                pooled_rel as f64 / pooled_relevant_total as f64
            } else {
                0.0
            },
        ),
    };

    Ok(EvalRow {
        bits: index.l(),
        precision,
        recall,
        mp_topk,
        mp_radius,
        empty_queries,
        skipped_untagged,
        skipped_no_relevant,
        queries_evaluated: queries,
    })
}

/// Random-projection LSH over the corpus's current (tf-idf) weights:
/// `l` Gaussian hyperplanes, code = sign of the projections.
pub fn lsh_baseline(c: &Corpus, l: usize, seed: u64) -> Result<(Vec<HashCode>, LinearHashFunction)> {
    if c.n() == 0 {
        return Err(Error::EmptyCorpus);
    }
    if l == 0 {
        return Err(Error::invalid("need at least one bit"));
    }
    let d = c.d();
    let mut r = rng(mix(seed, SALT_LSH));
    let mut w = DenseMat::zeros(d, l);
    for row in 0..d {
        for col in 0..l {
            w.set(row, col, standard_normal(&mut r));
        }
    }
    let f = LinearHashFunction::new(w, vec![0.0; l]);
    let codes = c
        .docs()
        .iter()
        .map(|doc| f.encode_sparse(doc))
        .collect();
    Ok((codes, f))
}

/// Box-Muller standard normal draw.
fn standard_normal(r: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - r.gen::<f64>(); // (0, 1]
    let u2: f64 = r.gen();
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * core::f64::consts::PI * u2)
}
