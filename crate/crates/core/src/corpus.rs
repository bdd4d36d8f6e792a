//! Sparse bag-of-words documents with tags: tokenization, tf-idf weighting,
//! cosine similarity, and summary statistics.
//!
//! A [`Corpus`] is immutable once built and safe to share across threads.
//! Vocabulary and tag ids are assigned in first-appearance order during
//! construction, so the same input always yields the same ids.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Sparse document vector: `(term_id, weight)` entries with strictly
/// increasing ids and strictly positive weights, plus a cached norm.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDocVector {
    entries: Vec<(u32, f64)>,
    norm: f64,
    token_count: u32,
}

impl SparseDocVector {
    /// Builds a vector from entries, validating the invariants.
    pub fn new(entries: Vec<(u32, f64)>) -> Result<Self> {
        let mut prev: Option<u32> = None;
        for &(id, w) in &entries {
            if let Some(p) = prev {
                if id <= p {
                    return Err(Error::invalid("term ids must be strictly increasing"));
                }
            }
            if !(w > 0.0) {
                return Err(Error::invalid("weights must be positive"));
            }
            prev = Some(id);
        }
        let token_count = entries.iter().map(|&(_, w)| w).sum::<f64>() as u32;
        Ok(SparseDocVector::from_parts(entries, token_count))
    }

    fn from_parts(entries: Vec<(u32, f64)>, token_count: u32) -> Self {
        let norm = math::sqrt(entries.iter().map(|&(_, w)| w * w).sum::<f64>());
        SparseDocVector {
            entries,
            norm,
            token_count,
        }
    }

    /// Builds a count vector from a term -> count map.
    pub fn from_counts(counts: &BTreeMap<u32, u32>) -> Self {
        let entries: Vec<(u32, f64)> = counts
            .iter()
            .filter(|&(_, &c)| c > 0)
            .map(|(&id, &c)| (id, c as f64))
            .collect();
        let token_count = counts.values().sum::<u32>();
        SparseDocVector::from_parts(entries, token_count)
    }

    pub fn empty() -> Self {
        SparseDocVector {
            entries: Vec::new(),
            norm: 0.0,
            token_count: 0,
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Number of tokens the document had before weighting (duplicates count).
    pub fn token_count(&self) -> u32 {
        self.token_count
    }

    /// Sparse dot product; both entry lists are sorted by id.
    pub fn dot(&self, other: &SparseDocVector) -> f64 {
        let (mut i, mut j) = (0, 0);
        let a = &self.entries;
        let b = &other.entries;
        let mut acc = 0.0;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

/// Cosine similarity in `[0, 1]`; zero when either vector has zero norm.
pub fn cosine(a: &SparseDocVector, b: &SparseDocVector) -> f64 {
    if a.norm == 0.0 || b.norm == 0.0 {
        return 0.0;
    }
    a.dot(b) / (a.norm * b.norm)
}

/// Set of tag ids attached to one document; may be empty (missing tags).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagSet {
    ids: Vec<u32>, // sorted, unique
}

impl TagSet {
    pub fn new(mut ids: Vec<u32>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        TagSet { ids }
    }

    pub fn empty() -> Self {
        TagSet::default()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// True when the two sets share at least one tag. Empty sets never share.
    pub fn intersects(&self, other: &TagSet) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.ids.len() && j < other.ids.len() {
            match self.ids[i].cmp(&other.ids[j]) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}

/// Term string <-> id map. Ids are dense, assigned in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    term_to_id: BTreeMap<String, u32>,
    terms: Vec<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Vocabulary::default()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.term_to_id.get(term).copied()
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(|s| s.as_str())
    }

    pub fn intern(&mut self, term: &str) -> u32 {
        if let Some(&id) = self.term_to_id.get(term) {
            return id;
        }
        let id = self.terms.len() as u32;
        self.term_to_id.insert(term.to_owned(), id);
        self.terms.push(term.to_owned());
        id
    }

    /// Terms in id order.
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// Rebuilds a vocabulary from `(term, id)` pairs; ids must be a
    /// permutation of `0..len`.
    pub fn from_pairs(pairs: Vec<(String, u32)>) -> Result<Self> {
        let n = pairs.len();
        let mut terms = alloc::vec![String::new(); n];
        let mut seen = alloc::vec![false; n];
        let mut term_to_id = BTreeMap::new();
        for (term, id) in pairs {
            let idx = id as usize;
            if idx >= n || seen[idx] {
                return Err(Error::invalid("vocabulary ids must be dense and unique"));
            }
            seen[idx] = true;
            term_to_id.insert(term.clone(), id);
            terms[idx] = term;
        }
        Ok(Vocabulary { term_to_id, terms })
    }
}

/// Tag string <-> id registry, same conventions as [`Vocabulary`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TagRegistry {
    name_to_id: BTreeMap<String, u32>,
    names: Vec<String>,
}

impl TagRegistry {
    pub fn new() -> Self {
        TagRegistry::default()
    }

    /// Number of possible tags `q`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.name_to_id.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(|s| s.as_str())
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.name_to_id.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.name_to_id.insert(name.to_owned(), id);
        self.names.push(name.to_owned());
        id
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Pluggable stemmer applied after lowercasing and stopword removal.
pub trait Stemmer: Send + Sync {
    fn stem(&self, word: &str) -> String;
}

/// Whitespace tokenizer with lowercasing, an optional stopword list, and an
/// optional stemmer (off by default).
#[derive(Default)]
pub struct Tokenizer {
    stopwords: BTreeSet<String>,
    stemmer: Option<Box<dyn Stemmer>>,
}

impl Tokenizer {
    pub fn new() -> Self {
        Tokenizer::default()
    }

    pub fn with_stopwords(mut self, words: impl IntoIterator<Item = String>) -> Self {
        self.stopwords = words.into_iter().map(|w| w.to_lowercase()).collect();
        self
    }

    pub fn with_stemmer(mut self, stemmer: Box<dyn Stemmer>) -> Self {
        self.stemmer = Some(stemmer);
        self
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace()
            .map(|w| w.to_lowercase())
            .filter(|w| !w.is_empty() && !self.stopwords.contains(w))
            .map(|w| match &self.stemmer {
                Some(s) => s.stem(&w),
                None => w,
            })
            .collect()
    }
}

/// Immutable collection of documents with parallel tag sets and the
/// vocabulary / tag registry they were built against.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    docs: Vec<SparseDocVector>,
    tags: Vec<TagSet>,
    vocab: Vocabulary,
    tag_registry: TagRegistry,
    idf: Option<Vec<f64>>,
}

impl Corpus {
    pub fn n(&self) -> usize {
        self.docs.len()
    }

    /// Vocabulary size `d`.
    pub fn d(&self) -> usize {
        self.vocab.len()
    }

    pub fn docs(&self) -> &[SparseDocVector] {
        &self.docs
    }

    pub fn doc(&self, i: usize) -> &SparseDocVector {
        &self.docs[i]
    }

    pub fn tags(&self) -> &[TagSet] {
        &self.tags
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn tag_registry(&self) -> &TagRegistry {
        &self.tag_registry
    }

    /// Inverse document frequencies, present after [`tfidf_transform`].
    pub fn idf(&self) -> Option<&[f64]> {
        self.idf.as_deref()
    }

    pub fn has_any_tags(&self) -> bool {
        self.tags.iter().any(|t| !t.is_empty())
    }

    /// Count vector for a query given this corpus's vocabulary; unknown
    /// terms are dropped silently.
    pub fn query_counts(&self, tokens: &[String]) -> SparseDocVector {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for tok in tokens {
            if let Some(id) = self.vocab.id(tok) {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        SparseDocVector::from_counts(&counts)
    }

    /// tf-idf vector for a query using this corpus's idf table.
    pub fn query_tfidf(&self, tokens: &[String]) -> Result<SparseDocVector> {
        let idf = self
            .idf
            .as_ref()
            .ok_or_else(|| Error::invalid("corpus has no idf table; run tfidf_transform"))?;
        let counts = self.query_counts(tokens);
        let entries: Vec<(u32, f64)> = counts
            .entries()
            .iter()
            .filter_map(|&(id, tf)| {
                let w = tf * idf[id as usize];
                (w > 0.0).then_some((id, w))
            })
            .collect();
        let token_count = counts.token_count();
        Ok(SparseDocVector::from_parts(entries, token_count))
    }
}

/// Incremental corpus constructor. The vocabulary and tag registry can each
/// be frozen independently; frozen means unknown terms/tags are dropped,
/// which is how query and test collections are mapped into a training
/// corpus's id space (and how a corpus is mapped into an externally trained
/// topic vocabulary).
pub struct CorpusBuilder {
    vocab: Vocabulary,
    tag_registry: TagRegistry,
    vocab_frozen: bool,
    tags_frozen: bool,
    docs: Vec<SparseDocVector>,
    tags: Vec<TagSet>,
}

impl CorpusBuilder {
    pub fn new() -> Self {
        CorpusBuilder {
            vocab: Vocabulary::new(),
            tag_registry: TagRegistry::new(),
            vocab_frozen: false,
            tags_frozen: false,
            docs: Vec::new(),
            tags: Vec::new(),
        }
    }

    /// Builder that maps documents into an existing id space entirely.
    pub fn frozen(vocab: Vocabulary, tag_registry: TagRegistry) -> Self {
        CorpusBuilder {
            vocab,
            tag_registry,
            vocab_frozen: true,
            tags_frozen: true,
            docs: Vec::new(),
            tags: Vec::new(),
        }
    }

    /// Builder with a fixed vocabulary but a growing tag registry.
    pub fn with_vocab(vocab: Vocabulary) -> Self {
        CorpusBuilder {
            vocab,
            tag_registry: TagRegistry::new(),
            vocab_frozen: true,
            tags_frozen: false,
            docs: Vec::new(),
            tags: Vec::new(),
        }
    }

    pub fn add_doc<S: AsRef<str>>(&mut self, tokens: &[String], tag_names: &[S]) {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for tok in tokens {
            let id = if self.vocab_frozen {
                match self.vocab.id(tok) {
                    Some(id) => id,
                    None => continue,
                }
            } else {
                self.vocab.intern(tok)
            };
            *counts.entry(id).or_insert(0) += 1;
        }
        let mut ids = Vec::with_capacity(tag_names.len());
        for name in tag_names {
            let name = name.as_ref();
            let id = if self.tags_frozen {
                match self.tag_registry.id(name) {
                    Some(id) => id,
                    None => continue,
                }
            } else {
                self.tag_registry.intern(name)
            };
            ids.push(id);
        }
        self.docs.push(SparseDocVector::from_counts(&counts));
        self.tags.push(TagSet::new(ids));
    }

    pub fn build(self) -> Corpus {
        Corpus {
            docs: self.docs,
            tags: self.tags,
            vocab: self.vocab,
            tag_registry: self.tag_registry,
            idf: None,
        }
    }
}

impl Default for CorpusBuilder {
    fn default() -> Self {
        CorpusBuilder::new()
    }
}

/// Count vector for a token list against a standalone vocabulary; unknown
/// terms are dropped.
pub fn doc_from_tokens(vocab: &Vocabulary, tokens: &[String]) -> SparseDocVector {
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    for tok in tokens {
        if let Some(id) = vocab.id(tok) {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    SparseDocVector::from_counts(&counts)
}

/// Applies an idf table to a count vector; zero-weight terms are dropped.
pub fn apply_idf(doc: &SparseDocVector, idf: &[f64]) -> SparseDocVector {
    let entries: Vec<(u32, f64)> = doc
        .entries()
        .iter()
        .filter_map(|&(id, tf)| {
            let w = tf * idf.get(id as usize).copied().unwrap_or(0.0);
            (w > 0.0).then_some((id, w))
        })
        .collect();
    SparseDocVector::from_parts(entries, doc.token_count())
}

/// Summary statistics of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub n: usize,
    pub d: usize,
    /// Mean number of nonzero terms per document.
    pub avg_sparsity_s: f64,
    /// Mean token count per document (duplicates included).
    pub avg_length: f64,
}

/// Computes [`CorpusStats`]; empty corpora are rejected.
pub fn stats(c: &Corpus) -> Result<CorpusStats> {
    if c.n() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let n = c.n() as f64;
    let nnz: usize = c.docs.iter().map(|d| d.nnz()).sum();
    let tokens: u64 = c.docs.iter().map(|d| d.token_count() as u64).sum();
    Ok(CorpusStats {
        n: c.n(),
        d: c.d(),
        avg_sparsity_s: nnz as f64 / n,
        avg_length: tokens as f64 / n,
    })
}

/// Reweights every document as `tf * ln(n / (1 + df))`, clamping negative
/// idf to zero. Terms whose weight clamps to zero are dropped; documents may
/// end up empty but are retained. The resulting corpus carries the idf table
/// for query-time use.
pub fn tfidf_transform(c: &Corpus) -> Result<Corpus> {
    if c.n() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let n = c.n() as f64;
    let mut df = alloc::vec![0u32; c.d()];
    for doc in &c.docs {
        for &(id, _) in doc.entries() {
            df[id as usize] += 1;
        }
    }
    let idf: Vec<f64> = df
        .iter()
        .map(|&dfi| math::ln(n / (1.0 + dfi as f64)).max(0.0))
        .collect();
    let docs: Vec<SparseDocVector> = c
        .docs
        .iter()
        .map(|doc| {
            let entries: Vec<(u32, f64)> = doc
                .entries()
                .iter()
                .filter_map(|&(id, tf)| {
                    let w = tf * idf[id as usize];
                    (w > 0.0).then_some((id, w))
                })
                .collect();
            SparseDocVector::from_parts(entries, doc.token_count())
        })
        .collect();
    Ok(Corpus {
        docs,
        tags: c.tags.clone(),
        vocab: c.vocab.clone(),
        tag_registry: c.tag_registry.clone(),
        idf: Some(idf),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        Tokenizer::new().tokenize(s)
    }

    fn tiny_corpus() -> Corpus {
        let mut b = CorpusBuilder::new();
        b.add_doc(&words("a b"), &["x"]);
        b.add_doc(&words("b c"), &[] as &[&str]);
        b.build()
    }

    #[test]
    fn two_line_corpus_shapes() {
        let c = tiny_corpus();
        assert_eq!(c.n(), 2);
        assert_eq!(c.d(), 3);
        assert_eq!(c.tags()[0].ids(), &[0]);
        assert!(c.tags()[1].is_empty());
        assert_eq!(c.tag_registry().len(), 1);
    }

    #[test]
    fn duplicate_tokens_aggregate() {
        let mut b = CorpusBuilder::new();
        b.add_doc(&words("a a b"), &[] as &[&str]);
        let c = b.build();
        let a_id = c.vocab().id("a").unwrap();
        let entry = c.doc(0).entries().iter().find(|e| e.0 == a_id).unwrap();
        assert_eq!(entry.1, 2.0);
        assert_eq!(c.doc(0).token_count(), 3);
    }

    #[test]
    fn cosine_identity_orthogonality_and_known_value() {
        let v = SparseDocVector::new(alloc::vec![(0, 1.0), (2, 3.0)]).unwrap();
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);

        let a = SparseDocVector::new(alloc::vec![(0, 1.0)]).unwrap();
        let b = SparseDocVector::new(alloc::vec![(1, 1.0)]).unwrap();
        assert_eq!(cosine(&a, &b), 0.0);

        // (1,1) vs (1,0) -> 1/sqrt(2)
        let a = SparseDocVector::new(alloc::vec![(0, 1.0), (1, 1.0)]).unwrap();
        let b = SparseDocVector::new(alloc::vec![(0, 1.0)]).unwrap();
        assert!((cosine(&a, &b) - 0.7071067811865476).abs() < 1e-6);
    }

    #[test]
    fn cosine_zero_norm_is_zero() {
        let z = SparseDocVector::empty();
        let v = SparseDocVector::new(alloc::vec![(0, 1.0)]).unwrap();
        assert_eq!(cosine(&z, &v), 0.0);
        assert_eq!(cosine(&z, &z), 0.0);
    }

    #[test]
    fn tfidf_clamps_ubiquitous_terms() {
        // "b" appears in both docs of a 2-doc corpus: idf = ln(2/3) < 0 -> 0.
        let c = tfidf_transform(&tiny_corpus()).unwrap();
        let b_id = c.vocab().id("b").unwrap();
        for doc in c.docs() {
            assert!(doc.entries().iter().all(|e| e.0 != b_id));
        }
        let idf = c.idf().unwrap();
        assert_eq!(idf[b_id as usize], 0.0);
    }

    #[test]
    fn tfidf_known_idf_value() {
        let mut b = CorpusBuilder::new();
        b.add_doc(&words("rare common"), &[] as &[&str]);
        for _ in 0..9 {
            b.add_doc(&words("common"), &[] as &[&str]);
        }
        let c = tfidf_transform(&b.build()).unwrap();
        let rare = c.vocab().id("rare").unwrap();
        // idf = ln(10/2)
        assert!((c.idf().unwrap()[rare as usize] - 1.6094379124341003).abs() < 1e-9);
    }

    #[test]
    fn tfidf_keeps_emptied_documents() {
        let mut b = CorpusBuilder::new();
        b.add_doc(&words("a"), &[] as &[&str]);
        b.add_doc(&words("a"), &[] as &[&str]);
        let c = tfidf_transform(&b.build()).unwrap();
        assert_eq!(c.n(), 2);
        assert!(c.doc(0).is_empty());
        assert_eq!(c.doc(0).norm(), 0.0);
    }

    #[test]
    fn stats_mean_and_boundary() {
        let mut b = CorpusBuilder::new();
        b.add_doc(&words("a b"), &[] as &[&str]);
        b.add_doc(&words("c d e f"), &[] as &[&str]);
        let s = stats(&b.build()).unwrap();
        assert_eq!(s.avg_sparsity_s, 3.0);
        assert_eq!(s.avg_length, 3.0);

        let mut b = CorpusBuilder::new();
        b.add_doc(&words("a b c d e"), &[] as &[&str]);
        let s = stats(&b.build()).unwrap();
        assert_eq!(s.avg_sparsity_s, 5.0);
        assert_eq!(s.d, 5);
    }

    #[test]
    fn stats_rejects_empty_corpus() {
        let c = CorpusBuilder::new().build();
        assert_eq!(stats(&c), Err(Error::EmptyCorpus));
    }

    #[test]
    fn sparse_vector_rejects_bad_entries() {
        assert!(SparseDocVector::new(alloc::vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(SparseDocVector::new(alloc::vec![(2, 1.0), (1, 2.0)]).is_err());
        assert!(SparseDocVector::new(alloc::vec![(0, 0.0)]).is_err());
    }

    #[test]
    fn frozen_builder_drops_unknown() {
        let train = tiny_corpus();
        let mut b = CorpusBuilder::frozen(train.vocab().clone(), train.tag_registry().clone());
        b.add_doc(&words("a zzz"), &["x", "unseen"]);
        let c = b.build();
        assert_eq!(c.doc(0).nnz(), 1);
        assert_eq!(c.tags()[0].ids(), &[0]);
    }

    #[test]
    fn tokenizer_lowercases_and_filters() {
        let t = Tokenizer::new().with_stopwords(["the".to_owned()]);
        assert_eq!(t.tokenize("The Cat the HAT"), alloc::vec!["cat", "hat"]);
    }

    #[test]
    fn tagset_intersection_rules() {
        let a = TagSet::new(alloc::vec![1, 3]);
        let b = TagSet::new(alloc::vec![3, 5]);
        let c = TagSet::new(alloc::vec![2]);
        let e = TagSet::empty();
        assert!(a.intersects(&b));
        assert!(!a.intersects(&c));
        assert!(!a.intersects(&e));
        assert!(!e.intersects(&e));
    }
}
