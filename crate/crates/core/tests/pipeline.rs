//! End-to-end checks of the feature-level fusion pipeline on planted
//! corpora: code quality, balance, self-consistency, and the relaxed
//! spectral constraints.

use mgthash_core::affinity::AffinityParams;
use mgthash_core::corpus::Corpus;
use mgthash_core::fuse_feature::{fit_codes_fea, train_hash_fn, FeaEncoder, SvmConfig};
use mgthash_core::retrieval::hamming;
use mgthash_core::selector::{relief_weights, select_top, ReliefConfig, SelectionResult};
use mgthash_core::spectral::CodeMatrix;
use mgthash_core::synth::{gen_synthetic, synth_corpus, SynthConfig};
use mgthash_core::topics::{train_bank, LdaConfig, TopicModelBank};

fn planted(n: usize, seed: u64) -> Corpus {
    let cfg = SynthConfig {
        n,
        coarse: 2,
        fine: 4,
        vocab: 120,
        seed,
        len_range: (14, 26),
        ..SynthConfig::default()
    };
    synth_corpus(&gen_synthetic(&cfg).unwrap())
}

fn small_bank(c: &Corpus, seed: u64) -> TopicModelBank {
    let lda = LdaConfig {
        train_iters: 150,
        seed,
        ..LdaConfig::default()
    };
    train_bank(c, &[2, 4, 8], &lda).unwrap()
}

fn class_of(c: &Corpus, i: usize) -> u32 {
    c.tags()[i].ids()[0]
}

fn mean_hamming_split(c: &Corpus, codes: &CodeMatrix) -> (f64, f64) {
    let n = codes.n();
    let (mut within, mut between, mut wn, mut bn) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (0..codes.l())
                .filter(|&b| codes.bit(i, b) != codes.bit(j, b))
                .count() as f64;
            if class_of(c, i) == class_of(c, j) {
                within += d;
                wn += 1.0;
            } else {
                between += d;
                bn += 1.0;
            }
        }
    }
    (within / wn, between / bn)
}

#[test]
fn planted_codes_separate_classes() {
    let c = planted(160, 3);
    let bank = small_bank(&c, 3);
    let w = relief_weights(
        &c,
        &bank,
        &ReliefConfig {
            sample_per_tag: 30,
            neighbors: 8,
            seed: 3,
            ..ReliefConfig::default()
        },
    )
    .unwrap();
    let sel = select_top(&w, 2).unwrap();
    let fit = fit_codes_fea(
        &c,
        &sel,
        &bank,
        4,
        AffinityParams {
            k: 12,
            ..AffinityParams::default()
        },
        3,
    )
    .unwrap();
    let (within, between) = mean_hamming_split(&c, &fit.codes);
    assert!(
        within < between,
        "within {within} not below between {between}"
    );
}

#[test]
fn trained_codes_are_balanced_per_bit() {
    let c = planted(101, 7);
    let bank = small_bank(&c, 7);
    let sel = SelectionResult {
        chosen: vec![2, 4],
        mu: vec![2.0, 1.0],
        mu_hat: vec![2.0, 1.0],
        k_tilde: 6,
    };
    let fit = fit_codes_fea(
        &c,
        &sel,
        &bank,
        6,
        AffinityParams {
            k: 10,
            ..AffinityParams::default()
        },
        7,
    )
    .unwrap();
    let codes = &fit.codes;
    for bit in 0..codes.l() {
        // Balance is only guaranteed for distinct column values.
        let mut vals: Vec<f64> = (0..codes.n())
            .map(|i| fit.embedding.matrix().at(i, bit))
            .collect();
        vals.sort_by(f64::total_cmp);
        let distinct = vals.windows(2).all(|w| w[0] != w[1]);
        if !distinct {
            continue;
        }
        let pos: i32 = (0..codes.n())
            .map(|i| i32::from(codes.bit(i, bit) == 1))
            .sum();
        let neg = codes.n() as i32 - pos;
        assert!((pos - neg).abs() <= 1, "bit {bit}: {pos} vs {neg}");
    }
}

#[test]
fn tiny_corpus_boundary_produces_valid_codes() {
    let c = planted(3, 11);
    let lda = LdaConfig {
        train_iters: 60,
        seed: 11,
        ..LdaConfig::default()
    };
    let bank = train_bank(&c, &[2], &lda).unwrap();
    let sel = SelectionResult {
        chosen: vec![2],
        mu: vec![1.0],
        mu_hat: vec![1.0],
        k_tilde: 2,
    };
    let fit = fit_codes_fea(
        &c,
        &sel,
        &bank,
        2,
        AffinityParams {
            k: 2,
            ..AffinityParams::default()
        },
        11,
    )
    .unwrap();
    assert_eq!(fit.codes.n(), 3);
    assert_eq!(fit.codes.l(), 2);
    for i in 0..3 {
        for b in 0..2 {
            assert!(fit.codes.bit(i, b) == 1 || fit.codes.bit(i, b) == -1);
        }
    }
}

#[test]
fn embedding_is_degree_orthogonal_to_ones() {
    let c = planted(120, 13);
    let bank = small_bank(&c, 13);
    let sel = SelectionResult {
        chosen: vec![4, 2],
        mu: vec![1.4, 1.0],
        mu_hat: vec![1.4, 1.0],
        k_tilde: 6,
    };
    let fit = fit_codes_fea(
        &c,
        &sel,
        &bank,
        5,
        AffinityParams {
            k: 10,
            ..AffinityParams::default()
        },
        13,
    )
    .unwrap();
    let y = fit.embedding.matrix();
    for col in 0..y.cols() {
        let dot: f64 = (0..y.rows()).map(|r| y.at(r, col) * fit.degrees[r]).sum();
        assert!(dot.abs() < 1e-6, "column {col}: {dot}");
    }
}

#[test]
fn encoder_reproduces_training_codes_on_frozen_features() {
    let c = planted(140, 17);
    let bank = small_bank(&c, 17);
    let sel = SelectionResult {
        chosen: vec![2, 4],
        mu: vec![1.8, 1.0],
        mu_hat: vec![1.8, 1.0],
        k_tilde: 6,
    };
    let fit = fit_codes_fea(
        &c,
        &sel,
        &bank,
        8,
        AffinityParams {
            k: 12,
            ..AffinityParams::default()
        },
        17,
    )
    .unwrap();
    let training = train_hash_fn(&fit.omegas, &fit.codes, &SvmConfig::default()).unwrap();
    // With frozen fused features (no Gibbs re-inference), agreement must be
    // at least the mean per-bit training accuracy minus 2%.
    let mut agree = 0usize;
    let total = fit.codes.n() * fit.codes.l();
    for (i, omega) in fit.omegas.iter().enumerate() {
        let code = training.f.encode_dense(omega.as_slice());
        for b in 0..fit.codes.l() {
            if (fit.codes.bit(i, b) == 1) == code.bit(b as u32) {
                agree += 1;
            }
        }
    }
    let self_consistency = agree as f64 / total as f64;
    assert!(
        self_consistency >= training.mean_accuracy() - 0.02,
        "self-consistency {self_consistency} below accuracy {}",
        training.mean_accuracy()
    );
}

#[test]
fn full_width_codes_pack_into_one_word() {
    let c = planted(130, 19);
    let bank = small_bank(&c, 19);
    let sel = SelectionResult {
        chosen: vec![8, 4],
        mu: vec![1.2, 1.0],
        mu_hat: vec![1.2, 1.0],
        k_tilde: 12,
    };
    let fit = fit_codes_fea(
        &c,
        &sel,
        &bank,
        64,
        AffinityParams {
            k: 10,
            ..AffinityParams::default()
        },
        19,
    )
    .unwrap();
    let training = train_hash_fn(&fit.omegas, &fit.codes, &SvmConfig::default()).unwrap();
    let encoder = FeaEncoder {
        models: vec![bank.get(8).unwrap().clone(), bank.get(4).unwrap().clone()],
        mu_hat: sel.mu_hat.clone(),
        hash: training.f,
    };
    let code = encoder.encode(c.doc(0), 5).unwrap();
    assert_eq!(code.l(), 64);
    assert_eq!(code.words().len(), 1);
    // Deterministic for a fixed seed.
    assert_eq!(code, encoder.encode(c.doc(0), 5).unwrap());
    assert_eq!(hamming(&code, &encoder.encode(c.doc(0), 5).unwrap()).unwrap(), 0);
}
