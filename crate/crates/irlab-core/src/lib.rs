//! A desk-scale laboratory for text-retrieval scoring functions.
//!
//! The crate bundles three things that are usually scattered across separate
//! tools:
//!
//! * classical rankers (TF-IDF, BM25, Jelinek-Mercer language model) and two
//!   toy neural matchers — a Siamese representation matcher and an
//!   interaction-matrix matcher — all satisfying one `Scorer` contract;
//! * probes for the heuristic retrieval constraints (TFC1/TFC2, TDC,
//!   LNC1/LNC2, TF-LNC, TSFC) that any scorer can be checked against;
//! * diagnostics: ranking metrics, synthetic benchmarks with planted ground
//!   truth, feature-robustness ablation, pooling-word extraction, and a
//!   collapsed-Gibbs topic model for reference word lists.
//!
//! Everything here is pure computation over in-memory data. File formats and
//! the command-line front end live in the companion `irlab` crate.
//!
//! The crate is `no_std` (with `alloc`); all transcendental math goes through
//! [`float`] and all randomness through the explicit seeded generator in
//! [`rng`].

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod axioms;
pub mod classic;
pub mod diagnostics;
pub mod float;
pub mod matchers;
pub mod metrics;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod text;
pub mod topics;

pub use axioms::Scorer;
pub use text::{Document, Query, Vocabulary};
