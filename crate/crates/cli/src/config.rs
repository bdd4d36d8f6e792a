//! Flat key-value pipeline configuration with CLI overrides and a stable
//! content hash for model caching and the run manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use mgthash_core::affinity::AffinityParams;
use mgthash_core::fuse_decision::DecConfig;
use mgthash_core::fuse_feature::SvmConfig;
use mgthash_core::retrieval::Pooling;
use mgthash_core::selector::{KeywordSpace, ReliefConfig};
use mgthash_core::topics::LdaConfig;

/// Corpus file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    #[default]
    Jsonl,
    Tsv,
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusFormat::Jsonl => write!(f, "jsonl"),
            CorpusFormat::Tsv => write!(f, "tsv"),
        }
    }
}

/// Which fusion strategy the trained model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Feature-level fusion.
    #[default]
    Fea,
    /// Decision-level fusion.
    Dec,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Fea => write!(f, "fea"),
            Variant::Dec => write!(f, "dec"),
        }
    }
}

/// Every knob of the train/query/eval pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    /// Separate corpus for estimating the topic bank (defaults to `corpus`).
    pub topics_corpus: Option<PathBuf>,
    pub model_dir: PathBuf,
    pub format: CorpusFormat,
    pub candidate_ks: Vec<usize>,
    /// Number of granularities to select (M).
    pub m: usize,
    pub relief_k: usize,
    pub relief_sample: usize,
    pub keyword_space: KeywordSpace,
    pub knn: usize,
    pub conf_a: f64,
    pub conf_b: f64,
    pub bits: usize,
    pub variant: Variant,
    pub c1: f64,
    pub c2: f64,
    pub svm_c: f64,
    pub lda_alpha: f64,
    pub lda_beta: f64,
    pub train_iters: u32,
    pub infer_iters: u32,
    pub average_final: u32,
    pub dec_rounds: usize,
    pub dec_tol: f64,
    pub radius: u32,
    pub topk: usize,
    pub pooling: Pooling,
    pub seed: u64,
    pub stopwords: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: PathBuf::from("corpus.jsonl"),
            topics_corpus: None,
            model_dir: PathBuf::from("model"),
            format: CorpusFormat::Jsonl,
            candidate_ks: vec![10, 30, 50, 70, 90, 120, 150],
            m: 3,
            relief_k: 10,
            relief_sample: 100,
            keyword_space: KeywordSpace::Tfidf,
            knn: 25,
            conf_a: 1.0,
            conf_b: 0.1,
            bits: 16,
            variant: Variant::Fea,
            c1: 1.0,
            c2: 1.0,
            svm_c: 1.0,
            lda_alpha: 0.5,
            lda_beta: 0.01,
            train_iters: 1000,
            infer_iters: 20,
            average_final: 5,
            dec_rounds: 30,
            dec_tol: 1e-6,
            radius: 3,
            topk: 200,
            pooling: Pooling::MacroOverQueries,
            seed: 42,
            stopwords: None,
        }
    }
}

impl PipelineConfig {
    /// Reads a `key = value` file; `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut cfg = PipelineConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key=value", lineno + 1))?;
            cfg.set(key.trim(), value.trim())
                .with_context(|| format!("line {}", lineno + 1))?;
        }
        Ok(cfg)
    }

    /// Applies one override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "corpus" => self.corpus = PathBuf::from(value),
            "topics_corpus" => {
                self.topics_corpus = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "model_dir" => self.model_dir = PathBuf::from(value),
            "format" => {
                self.format = match value {
                    "jsonl" => CorpusFormat::Jsonl,
                    "tsv" => CorpusFormat::Tsv,
                    other => bail!("unknown corpus format {other:?}"),
                }
            }
            "candidate_ks" => {
                self.candidate_ks = value
                    .split(',')
                    .map(|v| v.trim().parse::<usize>().context("bad K"))
                    .collect::<Result<_>>()?
            }
            "m" => self.m = value.parse()?,
            "relief_k" => self.relief_k = value.parse()?,
            "relief_sample" => self.relief_sample = value.parse()?,
            "keyword_space" => {
                self.keyword_space = match value {
                    "tfidf" => KeywordSpace::Tfidf,
                    "counts" => KeywordSpace::Counts,
                    other => bail!("unknown keyword space {other:?}"),
                }
            }
            "knn" => self.knn = value.parse()?,
            "a" => self.conf_a = value.parse()?,
            "b" => self.conf_b = value.parse()?,
            "bits" => self.bits = value.parse()?,
            "variant" => {
                self.variant = match value {
                    "fea" => Variant::Fea,
                    "dec" => Variant::Dec,
                    other => bail!("unknown variant {other:?}"),
                }
            }
            "c1" => self.c1 = value.parse()?,
            "c2" => self.c2 = value.parse()?,
            "svm_c" => self.svm_c = value.parse()?,
            "lda_alpha" => self.lda_alpha = value.parse()?,
            "lda_beta" => self.lda_beta = value.parse()?,
            "train_iters" => self.train_iters = value.parse()?,
            "infer_iters" => self.infer_iters = value.parse()?,
            "average_final" => self.average_final = value.parse()?,
            "dec_rounds" => self.dec_rounds = value.parse()?,
            "dec_tol" => self.dec_tol = value.parse()?,
            "radius" => self.radius = value.parse()?,
            "topk" => self.topk = value.parse()?,
            "pooling" => {
                self.pooling = match value {
                    "macro" => Pooling::MacroOverQueries,
                    "micro" => Pooling::MicroPooled,
                    other => bail!("unknown pooling mode {other:?}"),
                }
            }
            "seed" => self.seed = value.parse()?,
            "stopwords" => {
                self.stopwords = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    /// Validates downstream module constraints that are checkable without
    /// the data.
    pub fn validate(&self) -> Result<()> {
        if self.candidate_ks.is_empty() {
            bail!("candidate_ks must not be empty");
        }
        let mut ks = self.candidate_ks.clone();
        ks.sort_unstable();
        ks.dedup();
        if ks.len() != self.candidate_ks.len() {
            bail!("candidate_ks must be unique");
        }
        if self.candidate_ks.iter().any(|&k| k < 2) {
            bail!("every candidate K must be at least 2");
        }
        if self.m == 0 || self.m > self.candidate_ks.len() {
            bail!(
                "m must be in 1..={} (number of candidates)",
                self.candidate_ks.len()
            );
        }
        if !(self.conf_a <= 1.0 && self.conf_a >= self.conf_b && self.conf_b > 0.0) {
            bail!("confidences must satisfy 1 >= a >= b > 0");
        }
        if self.bits == 0 {
            bail!("bits must be positive");
        }
        if self.radius as usize > self.bits {
            bail!("radius cannot exceed bits");
        }
        if self.relief_k == 0 || self.knn == 0 {
            bail!("neighbor counts must be positive");
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            bail!("c1 and c2 must be positive");
        }
        if !(self.svm_c > 0.0) {
            bail!("svm_c must be positive");
        }
        if self.infer_iters == 0 {
            bail!("infer_iters must be positive");
        }
        Ok(())
    }

    /// Canonical key-value listing: sorted keys, stable float formatting.
    /// The manifest hash is the FNV-1a digest of this string, so it changes
    /// exactly when a field changes.
    pub fn canonical(&self) -> String {
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert("corpus", self.corpus.display().to_string());
        kv.insert(
            "topics_corpus",
            self.topics_corpus
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        kv.insert("model_dir", self.model_dir.display().to_string());
        kv.insert("format", self.format.to_string());
        kv.insert(
            "candidate_ks",
            self.candidate_ks
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.insert("m", self.m.to_string());
        kv.insert("relief_k", self.relief_k.to_string());
        kv.insert("relief_sample", self.relief_sample.to_string());
        kv.insert(
            "keyword_space",
            match self.keyword_space {
                KeywordSpace::Tfidf => "tfidf".into(),
                KeywordSpace::Counts => "counts".into(),
            },
        );
        kv.insert("knn", self.knn.to_string());
        kv.insert("a", format_f64(self.conf_a));
        kv.insert("b", format_f64(self.conf_b));
        kv.insert("bits", self.bits.to_string());
        kv.insert("variant", self.variant.to_string());
        kv.insert("c1", format_f64(self.c1));
        kv.insert("c2", format_f64(self.c2));
        kv.insert("svm_c", format_f64(self.svm_c));
        kv.insert("lda_alpha", format_f64(self.lda_alpha));
        kv.insert("lda_beta", format_f64(self.lda_beta));
        kv.insert("train_iters", self.train_iters.to_string());
        kv.insert("infer_iters", self.infer_iters.to_string());
        kv.insert("average_final", self.average_final.to_string());
        kv.insert("dec_rounds", self.dec_rounds.to_string());
        kv.insert("dec_tol", format_f64(self.dec_tol));
        kv.insert("radius", self.radius.to_string());
        kv.insert("topk", self.topk.to_string());
        kv.insert(
            "pooling",
            match self.pooling {
                Pooling::MacroOverQueries => "macro".into(),
                Pooling::MicroPooled => "micro".into(),
            },
        );
        kv.insert("seed", self.seed.to_string());
        kv.insert(
            "stopwords",
            self.stopwords
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        let mut out = String::new();
        for (k, v) in kv {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    /// Stable configuration hash.
    pub fn hash(&self) -> u64 {
        fnv1a(self.canonical().as_bytes())
    }

    /// Per-bit-width variant of this configuration (used by the eval sweep).
    pub fn with_bits(&self, bits: usize) -> PipelineConfig {
        PipelineConfig {
            bits,
            ..self.clone()
        }
    }

    pub fn lda_config(&self) -> LdaConfig {
        LdaConfig {
            alpha: self.lda_alpha,
            beta: self.lda_beta,
            train_iters: self.train_iters,
            infer_iters: self.infer_iters,
            seed: self.seed,
            track_loglik: false,
            average_final: self.average_final,
        }
    }

    pub fn relief_config(&self) -> ReliefConfig {
        ReliefConfig {
            sample_per_tag: self.relief_sample,
            neighbors: self.relief_k,
            seed: self.seed,
            keyword_space: self.keyword_space,
        }
    }

    pub fn affinity_params(&self) -> AffinityParams {
        AffinityParams {
            k: self.knn,
            a: self.conf_a,
            b: self.conf_b,
        }
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            c: self.svm_c,
            seed: self.seed,
            ..SvmConfig::default()
        }
    }

    pub fn dec_config(&self) -> DecConfig {
        DecConfig {
            c1: self.c1,
            c2: self.c2,
            max_rounds: self.dec_rounds,
            tol: self.dec_tol,
            seed: self.seed,
            ..DecConfig::default()
        }
    }
}

fn format_f64(v: f64) -> String {
    // Shortest round-trip representation keeps the canonical form stable.
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
