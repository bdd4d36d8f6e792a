//! Command implementations: corpus generation, bank training, granularity
//! selection, full model training, encoding, querying, and the bit-width
//! evaluation sweep. Every stage failure is tagged with the stage name.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use mgthash_core::corpus::{
    apply_idf, doc_from_tokens, tfidf_transform, Corpus, CorpusBuilder, SparseDocVector,
    TagRegistry, Tokenizer, Vocabulary,
};
use mgthash_core::fuse_decision::{fit_codes_dec, DecEncoder};
use mgthash_core::fuse_feature::{
    chosen_models, fit_codes_fea, train_hash_fn, FeaEncoder,
};
use mgthash_core::retrieval::{
    evaluate, lsh_baseline, search_radius, search_topk, EvalReport, HammingIndex, HashCode,
    Pooling,
};
use mgthash_core::rng::mix;
use mgthash_core::selector::{relief_weights, select_top, SelectionResult};
use mgthash_core::synth::{gen_synthetic, SynthConfig, SynthDoc};
use mgthash_core::topics::{train_bank, TopicModel, TopicModelBank};

use crate::config::{PipelineConfig, Variant};
use crate::formats;

const SALT_QUERY: u64 = 0x7175_6572;
const SALT_ENCODE: u64 = 0x656e_6364;
const SALT_TEST: u64 = 0x7465_7374;

/// Writes a generated synthetic corpus as JSONL.
pub fn cmd_gen(cfg: &SynthConfig, out: &Path) -> Result<usize> {
    let docs = gen_synthetic(cfg)
        .map_err(anyhow::Error::msg)
        .context("stage gen_synthetic")?;
    write_synth_jsonl(&docs, out).context("stage write_corpus")?;
    Ok(docs.len())
}

fn write_synth_jsonl(docs: &[SynthDoc], out: &Path) -> Result<()> {
    use std::io::Write;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut f = std::io::BufWriter::new(fs::File::create(out)?);
    for doc in docs {
        let record = serde_json::json!({ "text": doc.tokens.join(" "), "tags": doc.tags });
        writeln!(f, "{record}")?;
    }
    Ok(f.flush()?)
}

/// Builds the tokenizer configured by the pipeline (stopword list file).
pub fn tokenizer_for(cfg: &PipelineConfig) -> Result<Tokenizer> {
    let mut tok = Tokenizer::new();
    if let Some(path) = &cfg.stopwords {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read stopword list {}", path.display()))?;
        tok = tok.with_stopwords(text.lines().map(str::to_owned));
    }
    Ok(tok)
}

/// Loads the training corpus and, when an external topic-estimation corpus
/// is configured, returns the corpus the bank should be trained on. The main
/// corpus is mapped into the bank corpus's vocabulary in that case.
pub fn load_training_corpora(cfg: &PipelineConfig) -> Result<(Corpus, Option<Corpus>)> {
    let tok = tokenizer_for(cfg)?;
    match &cfg.topics_corpus {
        None => {
            let main = formats::load_corpus(&cfg.corpus, cfg.format, &tok, None)
                .context("stage load_corpus")?;
            Ok((main, None))
        }
        Some(ext_path) => {
            let ext = formats::load_corpus(ext_path, cfg.format, &tok, None)
                .context("stage load_topics_corpus")?;
            let mut builder = CorpusBuilder::with_vocab(ext.vocab().clone());
            let raw = formats::load_corpus(&cfg.corpus, cfg.format, &tok, None)
                .context("stage load_corpus")?;
            for (doc, tags) in raw.docs().iter().zip(raw.tags()) {
                let tokens: Vec<String> = doc
                    .entries()
                    .iter()
                    .flat_map(|&(id, w)| {
                        let term = raw.vocab().term(id).unwrap_or("").to_owned();
                        std::iter::repeat(term).take((w.round() as usize).max(1))
                    })
                    .collect();
                let names: Vec<&str> = tags
                    .ids()
                    .iter()
                    .filter_map(|&t| raw.tag_registry().name(t))
                    .collect();
                builder.add_doc(&tokens, &names);
            }
            Ok((builder.build(), Some(ext)))
        }
    }
}

fn topic_file_name(k: usize) -> String {
    format!("topics/topic_k{k}.bin")
}

fn save_bank(bank: &TopicModelBank, vocab: &Vocabulary, dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for model in bank.models() {
        let name = topic_file_name(model.k());
        formats::save_topic_model(model, &dir.join(&name))?;
        let words = dir.join(format!("topics/topic_k{}.topwords.txt", model.k()));
        formats::save_top_words(model, vocab, 10, &words)?;
        names.push(name);
    }
    Ok(names)
}

fn load_bank_files(dir: &Path, files: &[String]) -> Result<TopicModelBank> {
    let models: Vec<TopicModel> = files
        .iter()
        .map(|name| formats::load_topic_model(&dir.join(name)))
        .collect::<Result<_>>()?;
    TopicModelBank::from_models(models).map_err(anyhow::Error::msg)
}

fn save_manifest(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let mut text = cfg.canonical();
    text.push_str(&format!("config_hash={:016x}\n", cfg.hash()));
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.txt"), text)?;
    Ok(())
}

/// Reads a manifest back into a config and verifies its recorded hash.
pub fn load_manifest(dir: &Path) -> Result<PipelineConfig> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("missing model file {}", path.display()))?;
    let mut cfg = PipelineConfig::default();
    let mut stored_hash: Option<u64> = None;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{}: bad manifest line", path.display()))?;
        if key == "config_hash" {
            stored_hash = Some(u64::from_str_radix(value, 16)?);
        } else {
            cfg.set(key, value)?;
        }
    }
    let stored = stored_hash.context("manifest missing config_hash")?;
    if stored != cfg.hash() {
        bail!("{}: manifest hash mismatch", path.display());
    }
    Ok(cfg)
}

/// Trains only the topic bank into the model directory.
pub fn cmd_train_topics(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let (main, ext) = load_training_corpora(cfg)?;
    let bank_corpus = ext.as_ref().unwrap_or(&main);
    let bank = train_bank(bank_corpus, &cfg.candidate_ks, &cfg.lda_config())
        .map_err(anyhow::Error::msg)
        .context("stage train_bank")?;
    fs::create_dir_all(&cfg.model_dir)?;
    formats::save_vocab(main.vocab(), &cfg.model_dir.join("vocab.tsv"))?;
    formats::save_tags(main.tag_registry(), &cfg.model_dir.join("tags.tsv"))?;
    save_bank(&bank, main.vocab(), &cfg.model_dir).context("stage save_bank")?;
    save_manifest(cfg, &cfg.model_dir)?;
    Ok(())
}

/// Runs selection against an already trained bank in the model directory.
pub fn cmd_select(cfg: &PipelineConfig) -> Result<SelectionResult> {
    cfg.validate()?;
    let (main, _) = load_training_corpora(cfg)?;
    let files: Vec<String> = cfg
        .candidate_ks
        .iter()
        .map(|&k| topic_file_name(k))
        .collect();
    let bank = load_bank_files(&cfg.model_dir, &files).context("stage load_bank")?;
    let weights = relief_weights(&main, &bank, &cfg.relief_config())
        .map_err(anyhow::Error::msg)
        .context("stage relief_weights")?;
    let sel = select_top(&weights, cfg.m)
        .map_err(anyhow::Error::msg)
        .context("stage select_top")?;
    formats::save_selection(&sel, &cfg.model_dir.join("selection.txt"))?;
    Ok(sel)
}

/// Full training pipeline: bank, selection, code learning, hash function,
/// and all model files plus the manifest.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<SelectionResult> {
    cfg.validate()?;
    let (main, ext) = load_training_corpora(cfg)?;
    let bank_corpus = ext.as_ref().unwrap_or(&main);
    let bank = train_bank(bank_corpus, &cfg.candidate_ks, &cfg.lda_config())
        .map_err(anyhow::Error::msg)
        .context("stage train_bank")?;

    let weights = relief_weights(&main, &bank, &cfg.relief_config())
        .map_err(anyhow::Error::msg)
        .context("stage relief_weights")?;
    let sel = select_top(&weights, cfg.m)
        .map_err(anyhow::Error::msg)
        .context("stage select_top")?;

    let dir = &cfg.model_dir;
    fs::create_dir_all(dir)?;
    formats::save_vocab(main.vocab(), &dir.join("vocab.tsv"))?;
    formats::save_tags(main.tag_registry(), &dir.join("tags.tsv"))?;
    let topic_files = save_bank(&bank, main.vocab(), dir).context("stage save_bank")?;
    formats::save_selection(&sel, &dir.join("selection.txt"))?;

    let chosen_files: Vec<String> = sel.chosen.iter().map(|&k| topic_file_name(k)).collect();
    let _ = topic_files;

    match cfg.variant {
        Variant::Fea => {
            let fit = fit_codes_fea(&main, &sel, &bank, cfg.bits, cfg.affinity_params(), cfg.seed)
                .map_err(anyhow::Error::msg)
                .context("stage fit_codes_fea")?;
            let training = train_hash_fn(&fit.omegas, &fit.codes, &cfg.svm_config())
                .map_err(anyhow::Error::msg)
                .context("stage train_hash_fn")?;
            let model = formats::FeaModelFile {
                chosen: sel.chosen.clone(),
                mu_hat: sel.mu_hat.clone(),
                hash: training.f,
                topic_files: chosen_files,
            };
            formats::save_fea_model(&model, &dir.join("hash_fea.bin"))?;
            formats::save_codes(&fit.codes.to_hash_codes(), &dir.join("codes.bin"))?;
        }
        Variant::Dec => {
            let fit = fit_codes_dec(
                &main,
                &sel,
                &bank,
                cfg.bits,
                cfg.affinity_params(),
                &cfg.dec_config(),
            )
            .map_err(anyhow::Error::msg)
            .context("stage fit_codes_dec")?;
            let model = formats::DecModelFile {
                chosen: sel.chosen.clone(),
                alpha: fit.mvm.alpha.clone(),
                c1: cfg.c1,
                c2: cfg.c2,
                w_set: fit.mvm.w_set.clone(),
                thresholds: fit.thresholds.clone(),
                topic_files: chosen_files,
            };
            formats::save_dec_model(&model, &dir.join("hash_dec.bin"))?;
            formats::save_codes(&fit.codes.to_hash_codes(), &dir.join("codes.bin"))?;
        }
    }
    save_manifest(cfg, dir)?;
    Ok(sel)
}

/// A trained model reloaded from disk.
pub struct LoadedModel {
    pub cfg: PipelineConfig,
    pub vocab: Vocabulary,
    pub tags: TagRegistry,
    pub encoder: AnyEncoder,
    pub index: HammingIndex,
}

/// Either fusion variant's encoder.
pub enum AnyEncoder {
    Fea(FeaEncoder),
    Dec(DecEncoder),
}

impl AnyEncoder {
    pub fn encode(&self, x: &SparseDocVector, seed: u64) -> Result<HashCode> {
        match self {
            AnyEncoder::Fea(e) => e.encode(x, seed).map_err(anyhow::Error::msg),
            AnyEncoder::Dec(e) => Ok(e.encode(x, seed)),
        }
    }
}

/// Loads manifest, vocabulary, tags, the variant's hash model, its topic
/// models, and the training codes.
pub fn load_model(dir: &Path) -> Result<LoadedModel> {
    let cfg = load_manifest(dir)?;
    let vocab = formats::load_vocab(&dir.join("vocab.tsv"))?;
    let tags = formats::load_tags(&dir.join("tags.tsv"))?;
    let codes = formats::load_codes(&dir.join("codes.bin"))?;
    let index = HammingIndex::new(codes).map_err(anyhow::Error::msg)?;
    let encoder = match cfg.variant {
        Variant::Fea => {
            let file = formats::load_fea_model(&dir.join("hash_fea.bin"))?;
            let models: Vec<TopicModel> = file
                .topic_files
                .iter()
                .map(|name| formats::load_topic_model(&dir.join(name)))
                .collect::<Result<_>>()?;
            AnyEncoder::Fea(FeaEncoder {
                models,
                mu_hat: file.mu_hat,
                hash: file.hash,
            })
        }
        Variant::Dec => {
            let file = formats::load_dec_model(&dir.join("hash_dec.bin"))?;
            let models: Vec<TopicModel> = file
                .topic_files
                .iter()
                .map(|name| formats::load_topic_model(&dir.join(name)))
                .collect::<Result<_>>()?;
            AnyEncoder::Dec(DecEncoder {
                models,
                alpha: file.alpha,
                w_set: file.w_set,
                thresholds: file.thresholds,
            })
        }
    };
    Ok(LoadedModel {
        cfg,
        vocab,
        tags,
        encoder,
        index,
    })
}

/// Query mode: fixed radius or top-K.
#[derive(Debug, Clone, Copy)]
pub enum QueryMode {
    Radius(u32),
    TopK(usize),
}

/// Encodes a query text and searches the training index.
pub fn cmd_query(model_dir: &Path, text: &str, mode: QueryMode) -> Result<Vec<(u32, u32)>> {
    let model = load_model(model_dir).context("stage load_model")?;
    if let QueryMode::Radius(r) = mode {
        if r > model.index.l() {
            bail!("radius {r} exceeds code width {}", model.index.l());
        }
    }
    let tok = tokenizer_for(&model.cfg)?;
    let tokens = tok.tokenize(text);
    let doc = doc_from_tokens(&model.vocab, &tokens);
    let code = model
        .encoder
        .encode(&doc, mix(model.cfg.seed, SALT_QUERY))
        .context("stage encode")?;
    let hits = match mode {
        QueryMode::Radius(r) => search_radius(&model.index, &code, r).map_err(anyhow::Error::msg),
        QueryMode::TopK(k) => {
            search_topk(&model.index, &code, k.min(model.index.n())).map_err(anyhow::Error::msg)
        }
    }
    .context("stage search")?;
    Ok(hits)
}

/// Encodes every document of a corpus file with a trained model and writes a
/// codes file. Returns the number of documents encoded.
pub fn cmd_encode(
    model_dir: &Path,
    corpus_path: &Path,
    format: crate::config::CorpusFormat,
    out: &Path,
) -> Result<usize> {
    let model = load_model(model_dir).context("stage load_model")?;
    let tok = tokenizer_for(&model.cfg)?;
    let corpus = formats::load_corpus(
        corpus_path,
        format,
        &tok,
        Some((model.vocab.clone(), model.tags.clone())),
    )
    .context("stage load_corpus")?;
    let mut codes = Vec::with_capacity(corpus.n());
    for (i, doc) in corpus.docs().iter().enumerate() {
        codes.push(
            model
                .encoder
                .encode(doc, mix(mix(model.cfg.seed, SALT_ENCODE), i as u64))
                .context("stage encode")?,
        );
    }
    formats::save_codes(&codes, out).context("stage save_codes")?;
    Ok(codes.len())
}

/// Result of an evaluation sweep: one report per method.
pub struct EvalOutput {
    pub variant_report: EvalReport,
    pub lsh_report: EvalReport,
    pub variant_csv: PathBuf,
    pub lsh_csv: PathBuf,
}

/// Evaluates the configured variant and the LSH baseline across a bit-width
/// sweep. Per-width models are cached under `model_dir/l{bits}` keyed by the
/// manifest hash; missing or stale models are retrained.
pub fn cmd_eval(cfg: &PipelineConfig, test_path: &Path, bits: &[usize]) -> Result<EvalOutput> {
    cfg.validate()?;
    if bits.is_empty() {
        bail!("empty bit-width sweep");
    }
    let tok = tokenizer_for(cfg)?;
    let (main, _) = load_training_corpora(cfg)?;
    let main_tfidf = tfidf_transform(&main)
        .map_err(anyhow::Error::msg)
        .context("stage tfidf")?;

    let mut variant_report = EvalReport::default();
    let mut lsh_report = EvalReport::default();

    for &l in bits {
        let sub_cfg = {
            let mut c = cfg.with_bits(l);
            c.model_dir = cfg.model_dir.join(format!("l{l}"));
            if (c.radius as usize) > l {
                c.radius = l as u32;
            }
            c
        };
        let cached = load_manifest(&sub_cfg.model_dir)
            .map(|m| m.hash() == sub_cfg.hash())
            .unwrap_or(false);
        if !cached {
            cmd_train(&sub_cfg).with_context(|| format!("stage train (bits={l})"))?;
        }
        let model = load_model(&sub_cfg.model_dir).context("stage load_model")?;

        let test = formats::load_corpus(
            test_path,
            cfg.format,
            &tok,
            Some((model.vocab.clone(), model.tags.clone())),
        )
        .context("stage load_test_corpus")?;

        let mut test_codes = Vec::with_capacity(test.n());
        for (i, doc) in test.docs().iter().enumerate() {
            test_codes.push(
                model
                    .encoder
                    .encode(doc, mix(mix(cfg.seed, SALT_TEST), i as u64))
                    .context("stage encode_test")?,
            );
        }
        let row = evaluate(
            &model.index,
            main.tags(),
            &test_codes,
            test.tags(),
            sub_cfg.radius,
            cfg.topk.min(model.index.n()),
            cfg.pooling,
        )
        .map_err(anyhow::Error::msg)
        .context("stage evaluate")?;
        variant_report.rows.push(row);

        // LSH baseline at the same width, over tf-idf keyword space.
        let (lsh_codes, lsh_fn) = lsh_baseline(&main_tfidf, l, cfg.seed)
            .map_err(anyhow::Error::msg)
            .context("stage lsh_baseline")?;
        let lsh_index = HammingIndex::new(lsh_codes).map_err(anyhow::Error::msg)?;
        let idf = main_tfidf.idf().context("idf missing after transform")?;
        let lsh_test_codes: Vec<HashCode> = test
            .docs()
            .iter()
            .map(|doc| lsh_fn.encode_sparse(&apply_idf(doc, idf)))
            .collect();
        let lsh_row = evaluate(
            &lsh_index,
            main.tags(),
            &lsh_test_codes,
            test.tags(),
            sub_cfg.radius,
            cfg.topk.min(lsh_index.n()),
            cfg.pooling,
        )
        .map_err(anyhow::Error::msg)
        .context("stage evaluate_lsh")?;
        lsh_report.rows.push(lsh_row);
    }

    fs::create_dir_all(&cfg.model_dir)?;
    let variant_csv = cfg.model_dir.join(format!("eval_{}.csv", cfg.variant));
    let lsh_csv = cfg.model_dir.join("eval_lsh.csv");
    fs::write(&variant_csv, formats::eval_report_csv(&variant_report))?;
    fs::write(&lsh_csv, formats::eval_report_csv(&lsh_report))?;
    Ok(EvalOutput {
        variant_report,
        lsh_report,
        variant_csv,
        lsh_csv,
    })
}

/// Self-check helper used by tests: chosen models for a selection.
pub fn resolve_chosen<'a>(
    bank: &'a TopicModelBank,
    sel: &SelectionResult,
) -> Result<Vec<&'a TopicModel>> {
    chosen_models(bank, sel).map_err(anyhow::Error::msg)
}
