//! Hand-crafted baseline scorers: TF-IDF, Okapi BM25, and a Jelinek-Mercer
//! smoothed language model, plus the classical feature vector consumed by
//! the robustness diagnostic.
//!
//! All three scorers sum over query tokens as given, so a duplicated query
//! term contributes twice.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::float;
use crate::text::{Document, Query, Vocabulary};

/// Okapi BM25 knobs. `k1 > 0`, `b` in `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Jelinek-Mercer interpolation weight, strictly inside `(0, 1)` so the
/// smoothed probability never hits zero.
#[derive(Debug, Clone, Copy)]
pub struct LmParams {
    pub lambda: f64,
}

impl Default for LmParams {
    fn default() -> Self {
        LmParams { lambda: 0.4 }
    }
}

/// Collection statistics the rankers read: per-token document and collection
/// frequencies plus global size figures. `avgdl` is always `|C| / N`.
#[derive(Debug, Clone)]
pub struct CollectionStats {
    df: Vec<u64>,
    cf: Vec<u64>,
    pub n_docs: u64,
    pub total_tokens: u64,
    pub avgdl: f64,
}

impl CollectionStats {
    pub fn from_vocabulary(vocab: &Vocabulary) -> Self {
        let size = vocab.size() as u32;
        let df = (0..size).map(|id| vocab.df(id)).collect();
        let cf = (0..size).map(|id| vocab.cf(id)).collect();
        let n_docs = vocab.n_docs();
        let total_tokens = vocab.total_tokens();
        CollectionStats {
            df,
            cf,
            n_docs,
            total_tokens,
            avgdl: total_tokens as f64 / n_docs as f64,
        }
    }

    /// Direct construction for tests and synthetic setups.
    pub fn from_raw(df: Vec<u64>, cf: Vec<u64>, n_docs: u64, total_tokens: u64) -> Self {
        CollectionStats {
            df,
            cf,
            n_docs,
            total_tokens,
            avgdl: total_tokens as f64 / n_docs as f64,
        }
    }

    pub fn df(&self, token: u32) -> u64 {
        self.df.get(token as usize).copied().unwrap_or(0)
    }

    pub fn cf(&self, token: u32) -> u64 {
        self.cf.get(token as usize).copied().unwrap_or(0)
    }
}

/// Occurrence counts of each distinct token in `d`.
pub fn term_counts(d: &Document) -> BTreeMap<u32, u64> {
    let mut counts = BTreeMap::new();
    for &t in &d.tokens {
        *counts.entry(t).or_insert(0u64) += 1;
    }
    counts
}

/// `sum_t tf(t, d) * ln(N / df(t))` over query tokens; terms absent from the
/// collection contribute 0.
pub fn score_tfidf(q: &Query, d: &Document, stats: &CollectionStats) -> f64 {
    let counts = term_counts(d);
    let mut score = 0.0;
    for &t in &q.tokens {
        let df = stats.df(t);
        if df == 0 {
            continue;
        }
        let tf = counts.get(&t).copied().unwrap_or(0) as f64;
        score += tf * float::ln(stats.n_docs as f64 / df as f64);
    }
    score
}

/// Okapi BM25 with the idf term `ln((N - df + 0.5) / (df + 0.5))` clamped at
/// zero, which keeps term-frequency monotonicity on tiny corpora where more
/// than half the documents contain a term.
pub fn score_bm25(q: &Query, d: &Document, stats: &CollectionStats, params: &Bm25Params) -> f64 {
    let counts = term_counts(d);
    let doc_len = d.tokens.len() as f64;
    let mut score = 0.0;
    for &t in &q.tokens {
        let tf = counts.get(&t).copied().unwrap_or(0) as f64;
        if tf == 0.0 {
            continue;
        }
        let idf = bm25_idf(stats, t);
        let norm = params.k1 * (1.0 - params.b + params.b * doc_len / stats.avgdl);
        score += idf * tf * (params.k1 + 1.0) / (tf + norm);
    }
    score
}

/// BM25 idf component, clamped at zero.
pub fn bm25_idf(stats: &CollectionStats, token: u32) -> f64 {
    let n = stats.n_docs as f64;
    let df = stats.df(token) as f64;
    let raw = float::ln((n - df + 0.5) / (df + 0.5));
    raw.max(0.0)
}

/// Query log-likelihood under Jelinek-Mercer smoothing:
/// `sum_t ln((1 - lambda) tf/|d| + lambda cf/|C|)`. Query tokens with zero
/// collection frequency are skipped; their collection probability is
/// undefined.
pub fn score_lm_jm(q: &Query, d: &Document, stats: &CollectionStats, params: &LmParams) -> f64 {
    let counts = term_counts(d);
    let doc_len = d.tokens.len() as f64;
    let lambda = params.lambda;
    let mut score = 0.0;
    for &t in &q.tokens {
        let cf = stats.cf(t);
        if cf == 0 {
            continue;
        }
        let tf = counts.get(&t).copied().unwrap_or(0) as f64;
        let p = (1.0 - lambda) * tf / doc_len
            + lambda * cf as f64 / stats.total_tokens as f64;
        score += float::ln(p);
    }
    score
}

/// Names of the classical feature components, in vector order.
pub const FEATURE_NAMES: [&str; 8] = [
    "tfidf",
    "bm25",
    "lm_jm",
    "coverage",
    "doc_len",
    "sum_tf",
    "max_tf",
    "idf_coverage",
];

/// Classical feature vector for one query-document pair. Components follow
/// [`FEATURE_NAMES`]: the three ranker scores at default parameters, the
/// fraction of distinct query terms present, document length, summed and
/// maximal term frequency over distinct query terms, and idf-weighted
/// coverage.
pub fn feature_vector(q: &Query, d: &Document, stats: &CollectionStats) -> Vec<f64> {
    let counts = term_counts(d);
    let mut distinct: Vec<u32> = q.tokens.clone();
    distinct.sort_unstable();
    distinct.dedup();

    let mut present = 0u64;
    let mut sum_tf = 0u64;
    let mut max_tf = 0u64;
    let mut idf_present = 0.0;
    let mut idf_total = 0.0;
    for &t in &distinct {
        let tf = counts.get(&t).copied().unwrap_or(0);
        let idf = bm25_idf(stats, t);
        idf_total += idf;
        if tf > 0 {
            present += 1;
            idf_present += idf;
        }
        sum_tf += tf;
        max_tf = max_tf.max(tf);
    }
    let coverage = if distinct.is_empty() { 0.0 } else { present as f64 / distinct.len() as f64 };
    let idf_coverage = if idf_total > 0.0 { idf_present / idf_total } else { 0.0 };

    alloc::vec![
        score_tfidf(q, d, stats),
        score_bm25(q, d, stats, &Bm25Params::default()),
        score_lm_jm(q, d, stats, &LmParams::default()),
        coverage,
        d.tokens.len() as f64,
        sum_tf as f64,
        max_tf as f64,
        idf_coverage,
    ]
}
