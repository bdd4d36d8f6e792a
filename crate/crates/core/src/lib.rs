//! Multi-granularity topic hashing for short texts.
//!
//! Short bag-of-words documents are too sparse for keyword-space hashing to
//! preserve semantic similarity. This crate learns compact binary codes by
//! combining latent topic distributions extracted at several granularities
//! (topic counts) with tag-aware affinity, then serves exact Hamming-space
//! retrieval over the learned codes.
//!
//! The pipeline, bottom to top:
//!
//! * [`corpus`] — sparse bag-of-words documents, tags, tf-idf, cosine.
//! * [`topics`] — a bank of LDA models trained by collapsed Gibbs sampling,
//!   one per candidate granularity.
//! * [`selector`] — Relief-style scoring of candidate granularities by
//!   symmetric KL divergence between tag-sharing and non-sharing neighbors.
//! * [`affinity`] — sparse symmetric kNN similarity graphs with tag
//!   confidence weighting.
//! * [`spectral`] — dense symmetric eigen-solvers, Laplacian-eigenmap
//!   embeddings, median binarization, simplex projection.
//! * [`fuse_feature`] — feature-level fusion: weighted concatenation of the
//!   selected topic vectors, spectral code learning, and per-bit linear
//!   classifiers as the hash function.
//! * [`fuse_decision`] — decision-level fusion: one view per granularity,
//!   alternating optimization over codes, per-view projections, and a
//!   simplex-constrained view weighting.
//! * [`retrieval`] — packed-bit Hamming index, radius/top-K search, the
//!   evaluation harness, and a random-projection LSH baseline.
//! * [`synth`] — seeded two-level synthetic corpora with known ground truth.
//!
//! The crate is `no_std`-compatible (requires `alloc`); file formats, the
//! CLI, and anything touching the filesystem live in the companion crate.
//! All randomized routines take explicit seeds and are single-threaded, so
//! identical inputs produce bitwise-identical outputs.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod affinity;
pub mod corpus;
pub mod error;
pub mod fuse_decision;
pub mod fuse_feature;
pub mod linalg;
pub mod retrieval;
pub mod rng;
pub mod selector;
pub mod spectral;
pub mod synth;
pub mod topics;

mod math;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
