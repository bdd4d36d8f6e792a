//! File formats: JSONL/TSV corpora, the vocabulary and tag-registry tables,
//! binary topic-model / hash-model / code files (all integers and floats
//! little-endian), the selection summary, and the evaluation CSV.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use mgthash_core::corpus::{Corpus, CorpusBuilder, TagRegistry, Tokenizer, Vocabulary};
use mgthash_core::fuse_feature::LinearHashFunction;
use mgthash_core::linalg::DenseMat;
use mgthash_core::retrieval::{EvalReport, HashCode};
use mgthash_core::selector::SelectionResult;
use mgthash_core::topics::TopicModel;

use crate::config::CorpusFormat;

const TOPIC_MAGIC: &[u8; 4] = b"MGTM";
const FEA_MAGIC: &[u8; 4] = b"MGHF";
const DEC_MAGIC: &[u8; 4] = b"MGHD";
const CODES_MAGIC: &[u8; 4] = b"MGHC";
const FORMAT_VERSION: u32 = 1;

#[derive(Deserialize)]
struct JsonlRecord {
    text: String,
    #[serde(default)]
    tags: Vec<String>,
}

/// Loads a corpus file. `frozen` maps documents into an existing id space
/// (query/test collections); otherwise vocabulary and tags grow from the
/// data. Malformed records fail with their 1-based line number; an empty
/// file is an error.
pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    tokenizer: &Tokenizer,
    frozen: Option<(Vocabulary, TagRegistry)>,
) -> Result<Corpus> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let reader = BufReader::new(file);
    let mut builder = match frozen {
        Some((vocab, tags)) => CorpusBuilder::frozen(vocab, tags),
        None => CorpusBuilder::new(),
    };
    let mut records = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.with_context(|| format!("line {}: read error", lineno + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let (text, tags) = match format {
            CorpusFormat::Jsonl => {
                let rec: JsonlRecord = serde_json::from_str(&line)
                    .with_context(|| format!("line {}: malformed record", lineno + 1))?;
                (rec.text, rec.tags)
            }
            CorpusFormat::Tsv => {
                let (label, text) = line.split_once('\t').with_context(|| {
                    format!("line {}: expected label<TAB>text", lineno + 1)
                })?;
                let tags: Vec<String> = label
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(str::to_owned)
                    .collect();
                (text.to_owned(), tags)
            }
        };
        builder.add_doc(&tokenizer.tokenize(&text), &tags);
        records += 1;
    }
    if records == 0 {
        bail!("{}: corpus file is empty", path.display());
    }
    Ok(builder.build())
}

/// Serializes a corpus back to JSONL. Tokens are emitted in vocabulary-id
/// order with counts expanded, so reloading reproduces identical documents,
/// tags, and id assignments.
pub fn save_corpus_jsonl(c: &Corpus, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(create(path)?);
    for (doc, tags) in c.docs().iter().zip(c.tags()) {
        let mut words: Vec<&str> = Vec::new();
        for &(id, w) in doc.entries() {
            let term = c.vocab().term(id).context("dangling vocab id")?;
            for _ in 0..(w.round() as usize).max(1) {
                words.push(term);
            }
        }
        let names: Vec<&str> = tags
            .ids()
            .iter()
            .filter_map(|&t| c.tag_registry().name(t))
            .collect();
        let record = serde_json::json!({ "text": words.join(" "), "tags": names });
        writeln!(out, "{record}")?;
    }
    Ok(out.flush()?)
}

/// Writes the vocabulary as `term<TAB>id`, sorted by term.
pub fn save_vocab(vocab: &Vocabulary, path: &Path) -> Result<()> {
    let mut pairs: Vec<(&str, u32)> = vocab
        .terms()
        .iter()
        .enumerate()
        .map(|(id, term)| (term.as_str(), id as u32))
        .collect();
    pairs.sort_by(|a, b| a.0.cmp(b.0));
    let mut out = BufWriter::new(create(path)?);
    for (term, id) in pairs {
        writeln!(out, "{term}\t{id}")?;
    }
    Ok(out.flush()?)
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let text = read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (term, id) = line
            .split_once('\t')
            .with_context(|| format!("line {}: expected term<TAB>id", lineno + 1))?;
        pairs.push((term.to_owned(), id.parse::<u32>()?));
    }
    Ok(Vocabulary::from_pairs(pairs).map_err(anyhow::Error::msg)?)
}

/// Writes the tag registry as `tag<TAB>id`, sorted by tag name.
pub fn save_tags(tags: &TagRegistry, path: &Path) -> Result<()> {
    let mut pairs: Vec<(&str, u32)> = tags
        .names()
        .iter()
        .enumerate()
        .map(|(id, name)| (name.as_str(), id as u32))
        .collect();
    pairs.sort_by(|a, b| a.0.cmp(b.0));
    let mut out = BufWriter::new(create(path)?);
    for (name, id) in pairs {
        writeln!(out, "{name}\t{id}")?;
    }
    Ok(out.flush()?)
}

pub fn load_tags(path: &Path) -> Result<TagRegistry> {
    let text = read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (name, id) = line
            .split_once('\t')
            .with_context(|| format!("line {}: expected tag<TAB>id", lineno + 1))?;
        pairs.push((name.to_owned(), id.parse::<u32>()?));
    }
    pairs.sort_by_key(|&(_, id)| id);
    let mut registry = TagRegistry::new();
    for (expected, (name, id)) in pairs.into_iter().enumerate() {
        if id as usize != expected {
            bail!("{}: tag ids must be dense", path.display());
        }
        registry.intern(&name);
    }
    Ok(registry)
}

/// Topic model file: magic, version, K, d, alpha, beta, seed, chain lengths,
/// then the dense phi matrix row-major as little-endian f64.
pub fn save_topic_model(model: &TopicModel, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(create(path)?);
    out.write_all(TOPIC_MAGIC)?;
    write_u32(&mut out, FORMAT_VERSION)?;
    write_u32(&mut out, model.k() as u32)?;
    write_u32(&mut out, model.d() as u32)?;
    write_f64(&mut out, model.alpha())?;
    write_f64(&mut out, model.beta())?;
    write_u64(&mut out, model.seed())?;
    write_u32(&mut out, model.train_iters())?;
    write_u32(&mut out, model.infer_iters())?;
    write_u32(&mut out, model.average_final())?;
    for r in 0..model.k() {
        for &v in model.phi().row(r) {
            write_f64(&mut out, v)?;
        }
    }
    Ok(out.flush()?)
}

pub fn load_topic_model(path: &Path) -> Result<TopicModel> {
    let mut input = BufReader::new(open_model_file(path)?);
    expect_magic(&mut input, TOPIC_MAGIC, path)?;
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        bail!("{}: unsupported version {version}", path.display());
    }
    let k = read_u32(&mut input)? as usize;
    let d = read_u32(&mut input)? as usize;
    let alpha = read_f64(&mut input)?;
    let beta = read_f64(&mut input)?;
    let seed = read_u64(&mut input)?;
    let train_iters = read_u32(&mut input)?;
    let infer_iters = read_u32(&mut input)?;
    let average_final = read_u32(&mut input)?;
    let mut phi = DenseMat::zeros(k, d);
    for r in 0..k {
        for c in 0..d {
            phi.set(r, c, read_f64(&mut input)?);
        }
    }
    TopicModel::from_parts(phi, alpha, beta, seed, train_iters, infer_iters, average_final)
        .map_err(anyhow::Error::msg)
}

/// Human-readable sidecar: the highest-probability terms per topic.
pub fn save_top_words(model: &TopicModel, vocab: &Vocabulary, per_topic: usize, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(create(path)?);
    for (topic, words) in model.top_words(per_topic).iter().enumerate() {
        write!(out, "topic {topic}:")?;
        for &(id, p) in words {
            let term = vocab.term(id).unwrap_or("?");
            write!(out, " {term}({p:.4})")?;
        }
        writeln!(out)?;
    }
    Ok(out.flush()?)
}

/// Selection summary as a small key-value text file.
pub fn save_selection(sel: &SelectionResult, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(create(path)?);
    let chosen: Vec<String> = sel.chosen.iter().map(|k| k.to_string()).collect();
    writeln!(out, "chosen={}", chosen.join(","))?;
    writeln!(out, "k_tilde={}", sel.k_tilde)?;
    for ((k, mu), mu_hat) in sel.chosen.iter().zip(&sel.mu).zip(&sel.mu_hat) {
        writeln!(out, "mu_{k}={mu}")?;
        writeln!(out, "mu_hat_{k}={mu_hat}")?;
    }
    Ok(out.flush()?)
}

pub fn load_selection(path: &Path) -> Result<SelectionResult> {
    let text = read_to_string(path)?;
    let mut chosen: Vec<usize> = Vec::new();
    let mut k_tilde = 0usize;
    let mut mu = Vec::new();
    let mut mu_hat = Vec::new();
    for line in text.lines() {
        if let Some(list) = line.strip_prefix("chosen=") {
            chosen = list
                .split(',')
                .map(|v| v.trim().parse::<usize>().context("bad chosen K"))
                .collect::<Result<_>>()?;
        } else if let Some(v) = line.strip_prefix("k_tilde=") {
            k_tilde = v.parse()?;
        }
    }
    if chosen.is_empty() {
        bail!("{}: no chosen granularities", path.display());
    }
    for &k in &chosen {
        let mu_key = format!("mu_{k}=");
        let hat_key = format!("mu_hat_{k}=");
        let mut found_mu = None;
        let mut found_hat = None;
        for line in text.lines() {
            if let Some(v) = line.strip_prefix(&mu_key) {
                found_mu = Some(v.parse::<f64>()?);
            } else if let Some(v) = line.strip_prefix(&hat_key) {
                found_hat = Some(v.parse::<f64>()?);
            }
        }
        mu.push(found_mu.with_context(|| format!("missing mu for K={k}"))?);
        mu_hat.push(found_hat.with_context(|| format!("missing mu_hat for K={k}"))?);
    }
    Ok(SelectionResult {
        chosen,
        mu,
        mu_hat,
        k_tilde,
    })
}

/// Feature-level hash model: header (variant, l, K~, chosen Ks with weights),
/// the projection matrix and bias, and the topic-model file references.
pub struct FeaModelFile {
    pub chosen: Vec<usize>,
    pub mu_hat: Vec<f64>,
    pub hash: LinearHashFunction,
    pub topic_files: Vec<String>,
}

pub fn save_fea_model(model: &FeaModelFile, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(create(path)?);
    out.write_all(FEA_MAGIC)?;
    write_u32(&mut out, FORMAT_VERSION)?;
    write_u32(&mut out, model.hash.l() as u32)?;
    write_u32(&mut out, model.hash.dim() as u32)?;
    write_u32(&mut out, model.chosen.len() as u32)?;
    for (&k, &w) in model.chosen.iter().zip(&model.mu_hat) {
        write_u32(&mut out, k as u32)?;
        write_f64(&mut out, w)?;
    }
    for r in 0..model.hash.dim() {
        for &v in model.hash.weights().row(r) {
            write_f64(&mut out, v)?;
        }
    }
    for &v in model.hash.bias() {
        write_f64(&mut out, v)?;
    }
    for name in &model.topic_files {
        write_string(&mut out, name)?;
    }
    Ok(out.flush()?)
}

pub fn load_fea_model(path: &Path) -> Result<FeaModelFile> {
    let mut input = BufReader::new(open_model_file(path)?);
    expect_magic(&mut input, FEA_MAGIC, path)?;
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        bail!("{}: unsupported version {version}", path.display());
    }
    let l = read_u32(&mut input)? as usize;
    let dim = read_u32(&mut input)? as usize;
    let m = read_u32(&mut input)? as usize;
    let mut chosen = Vec::with_capacity(m);
    let mut mu_hat = Vec::with_capacity(m);
    for _ in 0..m {
        chosen.push(read_u32(&mut input)? as usize);
        mu_hat.push(read_f64(&mut input)?);
    }
    let mut w = DenseMat::zeros(dim, l);
    for r in 0..dim {
        for c in 0..l {
            w.set(r, c, read_f64(&mut input)?);
        }
    }
    let mut bias = Vec::with_capacity(l);
    for _ in 0..l {
        bias.push(read_f64(&mut input)?);
    }
    let mut topic_files = Vec::with_capacity(m);
    for _ in 0..m {
        topic_files.push(read_string(&mut input)?);
    }
    Ok(FeaModelFile {
        chosen,
        mu_hat,
        hash: LinearHashFunction::new(w, bias),
        topic_files,
    })
}

/// Decision-level hash model: header (variant, l, per-view K and alpha,
/// trade-offs), per-view projections, per-bit thresholds, topic references.
pub struct DecModelFile {
    pub chosen: Vec<usize>,
    pub alpha: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub w_set: Vec<DenseMat>,
    pub thresholds: Vec<f64>,
    pub topic_files: Vec<String>,
}

pub fn save_dec_model(model: &DecModelFile, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(create(path)?);
    out.write_all(DEC_MAGIC)?;
    write_u32(&mut out, FORMAT_VERSION)?;
    write_u32(&mut out, model.thresholds.len() as u32)?;
    write_u32(&mut out, model.chosen.len() as u32)?;
    for (&k, &a) in model.chosen.iter().zip(&model.alpha) {
        write_u32(&mut out, k as u32)?;
        write_f64(&mut out, a)?;
    }
    write_f64(&mut out, model.c1)?;
    write_f64(&mut out, model.c2)?;
    for w in &model.w_set {
        for r in 0..w.rows() {
            for &v in w.row(r) {
                write_f64(&mut out, v)?;
            }
        }
    }
    for &t in &model.thresholds {
        write_f64(&mut out, t)?;
    }
    for name in &model.topic_files {
        write_string(&mut out, name)?;
    }
    Ok(out.flush()?)
}

pub fn load_dec_model(path: &Path) -> Result<DecModelFile> {
    let mut input = BufReader::new(open_model_file(path)?);
    expect_magic(&mut input, DEC_MAGIC, path)?;
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        bail!("{}: unsupported version {version}", path.display());
    }
    let l = read_u32(&mut input)? as usize;
    let m = read_u32(&mut input)? as usize;
    let mut chosen = Vec::with_capacity(m);
    let mut alpha = Vec::with_capacity(m);
    for _ in 0..m {
        chosen.push(read_u32(&mut input)? as usize);
        alpha.push(read_f64(&mut input)?);
    }
    let c1 = read_f64(&mut input)?;
    let c2 = read_f64(&mut input)?;
    let mut w_set = Vec::with_capacity(m);
    for &k in &chosen {
        let mut w = DenseMat::zeros(k, l);
        for r in 0..k {
            for c in 0..l {
                w.set(r, c, read_f64(&mut input)?);
            }
        }
        w_set.push(w);
    }
    let mut thresholds = Vec::with_capacity(l);
    for _ in 0..l {
        thresholds.push(read_f64(&mut input)?);
    }
    let mut topic_files = Vec::with_capacity(m);
    for _ in 0..m {
        topic_files.push(read_string(&mut input)?);
    }
    Ok(DecModelFile {
        chosen,
        alpha,
        c1,
        c2,
        w_set,
        thresholds,
        topic_files,
    })
}

/// Codes file: magic, version, n, l, then n packed code rows.
pub fn save_codes(codes: &[HashCode], path: &Path) -> Result<()> {
    let l = codes.first().map(|c| c.l()).unwrap_or(0);
    let mut out = BufWriter::new(create(path)?);
    out.write_all(CODES_MAGIC)?;
    write_u32(&mut out, FORMAT_VERSION)?;
    write_u32(&mut out, codes.len() as u32)?;
    write_u32(&mut out, l)?;
    for code in codes {
        if code.l() != l {
            bail!("codes must share a bit width");
        }
        for &w in code.words() {
            write_u64(&mut out, w)?;
        }
    }
    Ok(out.flush()?)
}

pub fn load_codes(path: &Path) -> Result<Vec<HashCode>> {
    let mut input = BufReader::new(open_model_file(path)?);
    expect_magic(&mut input, CODES_MAGIC, path)?;
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        bail!("{}: unsupported version {version}", path.display());
    }
    let n = read_u32(&mut input)? as usize;
    let l = read_u32(&mut input)?;
    let words_per = (l as usize).div_ceil(64);
    let mut codes = Vec::with_capacity(n);
    for _ in 0..n {
        let mut words = Vec::with_capacity(words_per);
        for _ in 0..words_per {
            words.push(read_u64(&mut input)?);
        }
        codes.push(HashCode::from_words(words, l).map_err(anyhow::Error::msg)?);
    }
    Ok(codes)
}

/// Evaluation CSV: `bits,precision,recall,mp_topk,mp_radius,empty_queries`.
pub fn eval_report_csv(report: &EvalReport) -> String {
    let mut out = String::from("bits,precision,recall,mp_topk,mp_radius,empty_queries\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{}\n",
            row.bits, row.precision, row.recall, row.mp_topk, row.mp_radius, row.empty_queries
        ));
    }
    out
}

/// Graph triplet export for debugging: one `i j s_ij` line per stored entry
/// with `i < j`.
pub fn affinity_triplets(g: &mgthash_core::affinity::AffinityGraph) -> String {
    let mut out = String::new();
    for (i, j, s) in g.entries() {
        if i < j {
            out.push_str(&format!("{i} {j} {s}\n"));
        }
    }
    out
}

fn create(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
    }
    File::create(path).with_context(|| format!("cannot write {}", path.display()))
}

fn open_model_file(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("missing model file {}", path.display()))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("missing model file {}", path.display()))
}

fn expect_magic(input: &mut impl Read, magic: &[u8; 4], path: &Path) -> Result<()> {
    let mut buf = [0u8; 4];
    input
        .read_exact(&mut buf)
        .with_context(|| format!("{}: truncated file", path.display()))?;
    if &buf != magic {
        bail!("{}: wrong file type", path.display());
    }
    Ok(())
}

fn write_u32(out: &mut impl Write, v: u32) -> Result<()> {
    Ok(out.write_all(&v.to_le_bytes())?)
}

fn write_u64(out: &mut impl Write, v: u64) -> Result<()> {
    Ok(out.write_all(&v.to_le_bytes())?)
}

fn write_f64(out: &mut impl Write, v: f64) -> Result<()> {
    Ok(out.write_all(&v.to_le_bytes())?)
}

fn write_string(out: &mut impl Write, s: &str) -> Result<()> {
    write_u32(out, s.len() as u32)?;
    Ok(out.write_all(s.as_bytes())?)
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(input: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(input: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_string(input: &mut impl Read) -> Result<String> {
    let len = read_u32(input)? as usize;
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf)?;
    Ok(String::from_utf8(buf)?)
}
