//! Seeded synthetic corpora with a planted two-level topic hierarchy.
//!
//! Every fine topic nests inside exactly one coarse topic; each document
//! draws tokens from its coarse block, its fine block, and a shared
//! background block. Tags come from a configurable level of the hierarchy,
//! so the granularity that best predicts tags is known by construction:
//! coarse tags are recovered by low-K topic models, fine tags by high-K ones.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::corpus::{Corpus, CorpusBuilder};
use crate::rng::rng;
use crate::{Error, Result};

/// Which hierarchy level supplies the tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TagLevel {
    #[default]
    Coarse,
    Fine,
}

/// Generator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub coarse: usize,
    pub fine: usize,
    pub vocab: usize,
    pub tag_level: TagLevel,
    pub seed: u64,
    /// Inclusive token-count range per document.
    pub len_range: (usize, usize),
    /// Probability a token comes from the coarse block.
    pub coarse_frac: f64,
    /// Probability a token comes from the fine block; the remainder is
    /// background noise.
    pub fine_frac: f64,
    /// Probability a fine-block token is drawn from a sibling fine topic
    /// (same coarse parent) instead of the document's own fine block. With
    /// overlap, coarse-level similarity is carried by the shared sibling
    /// vocabulary rather than by dedicated coarse words alone: low-K models
    /// see the union of sibling blocks, while high-K models split the shared
    /// words apart, as happens with fine-grained themes in real short-text
    /// collections.
    pub fine_overlap: f64,
    /// Probability a token comes from the document's secondary theme: a
    /// contaminant fine topic drawn from a different coarse parent. Tags
    /// always follow the dominant theme, so contamination makes every
    /// document's class signal ambiguous, as mixed-topic short texts are.
    pub contamination: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 2000,
            coarse: 4,
            fine: 12,
            vocab: 500,
            tag_level: TagLevel::Coarse,
            seed: 42,
            len_range: (12, 30),
            coarse_frac: 0.3,
            fine_frac: 0.45,
            fine_overlap: 0.0,
            contamination: 0.0,
        }
    }
}

/// One generated document: tokens plus tag names.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDoc {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

/// Coarse parent of a fine topic under the contiguous nesting map.
pub fn parent_of(fine_topic: usize, coarse: usize, fine: usize) -> usize {
    fine_topic * coarse / fine
}

/// First fine topic nested under a coarse parent.
fn siblings_start(parent: usize, coarse: usize, fine: usize) -> usize {
    (parent * fine).div_ceil(coarse)
}

/// One past the last fine topic nested under a coarse parent.
fn siblings_end(parent: usize, coarse: usize, fine: usize) -> usize {
    ((parent + 1) * fine).div_ceil(coarse)
}

/// Generates the corpus as token lists; byte-identical for a fixed config.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<Vec<SynthDoc>> {
    if cfg.coarse == 0 || cfg.n == 0 {
        return Err(Error::invalid("need at least one coarse topic and one document"));
    }
    if cfg.fine < cfg.coarse {
        return Err(Error::invalid(
            "fine topics must refine coarse topics (fine >= coarse)",
        ));
    }
    if cfg.len_range.0 == 0 || cfg.len_range.0 > cfg.len_range.1 {
        return Err(Error::invalid("bad document length range"));
    }
    if !(cfg.coarse_frac >= 0.0 && cfg.fine_frac >= 0.0 && cfg.coarse_frac + cfg.fine_frac <= 1.0)
    {
        return Err(Error::invalid("token fractions must be non-negative and sum to at most 1"));
    }
    if !(0.0..=1.0).contains(&cfg.fine_overlap) {
        return Err(Error::invalid("fine_overlap must be in [0, 1]"));
    }
    if !(0.0..=1.0).contains(&cfg.contamination) {
        return Err(Error::invalid("contamination must be in [0, 1]"));
    }
    if cfg.contamination > 0.0 && cfg.coarse < 2 {
        return Err(Error::invalid("contamination needs at least two coarse topics"));
    }

    // Partition the vocabulary: one block per coarse topic, one per fine
    // topic, and a background block taking the remainder.
    let reserved = cfg.vocab / 10 + 1;
    let usable = cfg
        .vocab
        .checked_sub(reserved)
        .ok_or_else(|| Error::invalid("vocabulary too small"))?;
    let coarse_total = usable / 2;
    let fine_total = usable - coarse_total;
    let coarse_block = coarse_total / cfg.coarse;
    let fine_block = fine_total / cfg.fine;
    if coarse_block == 0 || fine_block == 0 {
        return Err(Error::invalid("vocabulary too small for the topic counts"));
    }
    let coarse_start = 0;
    let fine_start = cfg.coarse * coarse_block;
    let bg_start = fine_start + cfg.fine * fine_block;
    let bg_size = cfg.vocab - bg_start;

    let mut r = rng(cfg.seed);
    let mut docs = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let f = r.gen_range(0..cfg.fine);
        let c = parent_of(f, cfg.coarse, cfg.fine);
        // Secondary theme from a different coarse parent; tags stay with the
        // dominant theme.
        let contaminant = if cfg.contamination > 0.0 {
            loop {
                let g = r.gen_range(0..cfg.fine);
                if parent_of(g, cfg.coarse, cfg.fine) != c {
                    break Some(g);
                }
            }
        } else {
            None
        };
        let len = r.gen_range(cfg.len_range.0..=cfg.len_range.1);
        let mut tokens = Vec::with_capacity(len);
        for _ in 0..len {
            let (theme, theme_parent) = match contaminant {
                Some(g) if r.gen::<f64>() < cfg.contamination => {
                    (g, parent_of(g, cfg.coarse, cfg.fine))
                }
                _ => (f, c),
            };
            let u: f64 = r.gen();
            let word = if u < cfg.coarse_frac {
                coarse_start + theme_parent * coarse_block + r.gen_range(0..coarse_block)
            } else if u < cfg.coarse_frac + cfg.fine_frac {
                // Possibly draw from a sibling fine block under the same
                // coarse parent, so siblings share vocabulary.
                let mut source = theme;
                if cfg.fine_overlap > 0.0 && r.gen::<f64>() < cfg.fine_overlap {
                    let lo = siblings_start(theme_parent, cfg.coarse, cfg.fine);
                    let hi = siblings_end(theme_parent, cfg.coarse, cfg.fine);
                    source = r.gen_range(lo..hi);
                }
                fine_start + source * fine_block + r.gen_range(0..fine_block)
            } else {
                bg_start + r.gen_range(0..bg_size)
            };
            tokens.push(format!("w{word}"));
        }
        let tags = match cfg.tag_level {
            TagLevel::Coarse => alloc::vec![format!("c{c}")],
            TagLevel::Fine => alloc::vec![format!("f{f}")],
        };
        docs.push(SynthDoc { tokens, tags });
    }
    Ok(docs)
}

/// Builds a [`Corpus`] directly from generated documents.
pub fn synth_corpus(docs: &[SynthDoc]) -> Corpus {
    let mut b = CorpusBuilder::new();
    for doc in docs {
        b.add_doc(&doc.tokens, &doc.tags);
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            n: 50,
            vocab: 200,
            ..SynthConfig::default()
        };
        assert_eq!(gen_synthetic(&cfg).unwrap(), gen_synthetic(&cfg).unwrap());
        let other = SynthConfig { seed: 43, ..cfg };
        assert_ne!(gen_synthetic(&other).unwrap(), gen_synthetic(&cfg).unwrap());
    }

    #[test]
    fn rejects_inconsistent_hierarchy() {
        let cfg = SynthConfig {
            coarse: 8,
            fine: 4,
            ..SynthConfig::default()
        };
        assert!(gen_synthetic(&cfg).is_err());
        let cfg = SynthConfig {
            vocab: 10,
            coarse: 4,
            fine: 12,
            n: 5,
            ..SynthConfig::default()
        };
        assert!(gen_synthetic(&cfg).is_err());
    }

    #[test]
    fn tag_levels_produce_expected_registries() {
        let base = SynthConfig {
            n: 300,
            vocab: 300,
            ..SynthConfig::default()
        };
        let coarse = synth_corpus(&gen_synthetic(&base).unwrap());
        assert_eq!(coarse.tag_registry().len(), 4);
        let fine_cfg = SynthConfig {
            tag_level: TagLevel::Fine,
            ..base
        };
        let fine = synth_corpus(&gen_synthetic(&fine_cfg).unwrap());
        assert_eq!(fine.tag_registry().len(), 12);
    }

    #[test]
    fn nesting_is_contiguous_and_total() {
        for f in 0..12 {
            let p = parent_of(f, 4, 12);
            assert!(p < 4);
            assert_eq!(p, f / 3);
        }
    }

    #[test]
    fn documents_respect_length_range() {
        let cfg = SynthConfig {
            n: 100,
            vocab: 200,
            len_range: (5, 9),
            ..SynthConfig::default()
        };
        for doc in gen_synthetic(&cfg).unwrap() {
            assert!(doc.tokens.len() >= 5 && doc.tokens.len() <= 9);
            assert_eq!(doc.tags.len(), 1);
        }
    }
}
