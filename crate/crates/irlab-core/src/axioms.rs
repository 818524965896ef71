//! Perturbation probes for heuristic retrieval constraints, runnable
//! against any scorer.
//!
//! Each probe is a constructed query and document pair (triple for the
//! diminishing-returns constraint) whose expected score ordering follows
//! from one constraint:
//!
//! * `tfc1` - equal lengths, one more query-term occurrence wins strictly;
//! * `tfc2` - equal lengths, the gain of each extra occurrence shrinks;
//! * `tdc` - equal lengths and equal total query-term mass, more of the
//!   rarer (more discriminative) term wins strictly;
//! * `lnc1` - appending a non-query token never helps;
//! * `lnc2` - concatenating a document with itself never hurts;
//! * `tf_lnc` - appending copies of the query term itself wins strictly;
//! * `tsfc` - equal lengths and equal total semantic similarity mass to the
//!   query term, more exact occurrences win strictly.
//!
//! Probes are normalized so `d1` is always the document expected to score
//! higher; checks compare order only, so any strictly increasing transform
//! of a scorer passes and fails exactly the same probes.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::classic::{
    score_bm25, score_lm_jm, score_tfidf, Bm25Params, CollectionStats, LmParams,
};
use crate::matchers::{semantic_mass, EmbeddingTable, Matcher, SimilarityKind};
use crate::rng::Rng;
use crate::text::{truncate, Document, Query, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AxiomId {
    Tfc1,
    Tfc2,
    Tdc,
    Lnc1,
    Lnc2,
    TfLnc,
    Tsfc,
}

impl AxiomId {
    pub const ALL: [AxiomId; 7] = [
        AxiomId::Tfc1,
        AxiomId::Tfc2,
        AxiomId::Tdc,
        AxiomId::Lnc1,
        AxiomId::Lnc2,
        AxiomId::TfLnc,
        AxiomId::Tsfc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AxiomId::Tfc1 => "tfc1",
            AxiomId::Tfc2 => "tfc2",
            AxiomId::Tdc => "tdc",
            AxiomId::Lnc1 => "lnc1",
            AxiomId::Lnc2 => "lnc2",
            AxiomId::TfLnc => "tf_lnc",
            AxiomId::Tsfc => "tsfc",
        }
    }

    pub fn from_name(name: &str) -> Option<AxiomId> {
        AxiomId::ALL.iter().copied().find(|a| a.name() == name)
    }
}

/// How probe scores must relate for a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    /// `score(d1) > score(d2)`, strictly.
    StrictOrder,
    /// `score(d1) >= score(d2)`.
    WeakOrder,
    /// `score(d2) - score(d1) >= score(d3) - score(d2)`: the occurrence
    /// counts grow d1 -> d2 -> d3 and the marginal gain must not grow.
    DiminishingGain,
}

#[derive(Debug, Clone)]
pub struct ProbeMeta {
    /// Per probed term: `(token, count in d1, count in d2)`.
    pub exact_counts: Vec<(u32, u64, u64)>,
    /// `(s(w, d1), s(w, d2))` semantic similarity masses, when relevant.
    pub semantic: Option<(f64, f64)>,
    pub lengths: (usize, usize, Option<usize>),
}

/// One constructed constraint instance. `d1` is expected to win.
#[derive(Debug, Clone)]
pub struct AxiomProbe {
    pub axiom: AxiomId,
    pub query: Query,
    pub d1: Document,
    pub d2: Document,
    pub d3: Option<Document>,
    pub expectation: Expectation,
    pub meta: ProbeMeta,
}

impl AxiomProbe {
    /// Re-derives counts, lengths, and semantic masses from the stored
    /// documents and compares them with the stored metadata.
    pub fn verify(&self, similarity: Option<(&EmbeddingTable, SimilarityKind)>) -> bool {
        let count = |d: &Document, w: u32| d.tokens.iter().filter(|&&t| t == w).count() as u64;
        for &(w, c1, c2) in &self.meta.exact_counts {
            if count(&self.d1, w) != c1 || count(&self.d2, w) != c2 {
                return false;
            }
        }
        let lens = (
            self.d1.tokens.len(),
            self.d2.tokens.len(),
            self.d3.as_ref().map(|d| d.tokens.len()),
        );
        if lens != self.meta.lengths {
            return false;
        }
        if let (Some((s1, s2)), Some((table, kind))) = (self.meta.semantic, similarity) {
            let w = self.query.tokens[0];
            let r1 = semantic_mass(w, &self.d1.tokens, table, kind);
            let r2 = semantic_mass(w, &self.d2.tokens, table, kind);
            if (r1 - s1).abs() > 1e-9 || (r2 - s2).abs() > 1e-9 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AxiomError {
    /// A scorer failed on a probe; the probe's identity is attached.
    ScorerFailure { axiom: AxiomId, scorer: String, message: String },
}

impl fmt::Display for AxiomError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxiomError::ScorerFailure { axiom, scorer, message } => write!(
                f,
                "scorer {scorer:?} failed on a {} probe: {message}",
                axiom.name()
            ),
        }
    }
}

/// Why a probe could not be constructed; skipped probes are counted, not
/// silently dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// The base document is too short for the required edits.
    BaseTooShort,
    /// No term satisfied the document-frequency requirements.
    NoEligibleTerm,
    /// Bounded search found no neighbor set balancing the semantic mass.
    SemanticBalance,
}

/// The uniform scoring contract every ranker, matcher, and wrapper
/// satisfies. Implementations are deterministic and total on nonempty
/// inputs.
pub trait Scorer {
    fn name(&self) -> &str;

    fn score(&self, q: &Query, d: &Document) -> Result<f64, String>;

    /// The scorer's own embedding space, when it has one; semantic-balance
    /// probes use it so the probe challenges the model on its own terms.
    fn similarity_context(&self) -> Option<(EmbeddingTable, SimilarityKind)> {
        None
    }
}

// ---- scorer implementations ----

pub struct TfidfScorer {
    pub stats: CollectionStats,
}

impl Scorer for TfidfScorer {
    fn name(&self) -> &str {
        "tfidf"
    }
    fn score(&self, q: &Query, d: &Document) -> Result<f64, String> {
        Ok(score_tfidf(q, d, &self.stats))
    }
}

pub struct Bm25Scorer {
    pub stats: CollectionStats,
    pub params: Bm25Params,
}

impl Scorer for Bm25Scorer {
    fn name(&self) -> &str {
        "bm25"
    }
    fn score(&self, q: &Query, d: &Document) -> Result<f64, String> {
        Ok(score_bm25(q, d, &self.stats, &self.params))
    }
}

pub struct LmJmScorer {
    pub stats: CollectionStats,
    pub params: LmParams,
}

impl Scorer for LmJmScorer {
    fn name(&self) -> &str {
        "lm_jm"
    }
    fn score(&self, q: &Query, d: &Document) -> Result<f64, String> {
        Ok(score_lm_jm(q, d, &self.stats, &self.params))
    }
}

/// Adapts a neural matcher to the scorer contract.
pub struct MatcherScorer<M: Matcher> {
    pub model: M,
    pub label: String,
}

impl<M: Matcher> Scorer for MatcherScorer<M> {
    fn name(&self) -> &str {
        &self.label
    }
    fn score(&self, q: &Query, d: &Document) -> Result<f64, String> {
        self.model.score(&q.tokens, &d.tokens).map_err(|e| format!("{e}"))
    }
    fn similarity_context(&self) -> Option<(EmbeddingTable, SimilarityKind)> {
        let kind = self.model.similarity_kind()?;
        Some((self.model.embedding_table(), kind))
    }
}

/// Scores the first `max_len` tokens only.
pub struct TruncateScorer<S> {
    pub inner: S,
    pub max_len: usize,
    pub label: String,
}

impl<S: Scorer> TruncateScorer<S> {
    pub fn new(inner: S, max_len: usize) -> Self {
        let label = format!("{}@trunc{}", inner.name(), max_len);
        TruncateScorer { inner, max_len, label }
    }
}

impl<S: Scorer> Scorer for TruncateScorer<S> {
    fn name(&self) -> &str {
        &self.label
    }
    fn score(&self, q: &Query, d: &Document) -> Result<f64, String> {
        self.inner.score(q, &truncate(d, self.max_len))
    }
    fn similarity_context(&self) -> Option<(EmbeddingTable, SimilarityKind)> {
        self.inner.similarity_context()
    }
}

/// Splits the document into passages and aggregates the inner scorer over
/// them (max or mean).
pub struct PassageScorer<S> {
    pub inner: S,
    pub passage_len: usize,
    pub stride: usize,
    pub use_mean: bool,
    pub label: String,
}

impl<S: Scorer> PassageScorer<S> {
    pub fn new(inner: S, passage_len: usize, stride: usize, use_mean: bool) -> Self {
        let agg = if use_mean { "mean" } else { "max" };
        let label = format!("{}@passage{}x{}:{}", inner.name(), passage_len, stride, agg);
        PassageScorer { inner, passage_len, stride, use_mean, label }
    }
}

impl<S: Scorer> Scorer for PassageScorer<S> {
    fn name(&self) -> &str {
        &self.label
    }
    fn score(&self, q: &Query, d: &Document) -> Result<f64, String> {
        crate::diagnostics::passage_score(
            &self.inner,
            q,
            d,
            self.passage_len,
            self.stride,
            self.use_mean,
        )
    }
    fn similarity_context(&self) -> Option<(EmbeddingTable, SimilarityKind)> {
        self.inner.similarity_context()
    }
}

// ---- probe generation ----

/// Base material for probe construction: encoded documents, the vocabulary
/// they came from, collection statistics, and a fallback embedding table
/// for semantic-balance probes.
pub struct ProbeContext {
    pub docs: Vec<Document>,
    pub vocab: Vocabulary,
    pub stats: CollectionStats,
    pub embeddings: EmbeddingTable,
}

impl ProbeContext {
    /// Builds the context from raw token documents: vocabulary at
    /// `min_count` 1, encoded docs, stats, and a fresh random embedding
    /// table of the given dimension.
    pub fn from_token_docs(
        docs: &[(String, Vec<String>)],
        embed_dim: usize,
        seed: u64,
    ) -> Self {
        let token_docs: Vec<Vec<String>> = docs.iter().map(|(_, t)| t.clone()).collect();
        let vocab = Vocabulary::build(&token_docs, 1).expect("nonempty corpus");
        ProbeContext::with_vocab(docs, vocab, embed_dim, seed)
    }

    /// Same, but over a caller-supplied vocabulary (e.g. the one a model
    /// under test was trained with, so probe ids match its embedding rows).
    pub fn with_vocab(
        docs: &[(String, Vec<String>)],
        vocab: Vocabulary,
        embed_dim: usize,
        seed: u64,
    ) -> Self {
        let encoded = docs
            .iter()
            .map(|(id, tokens)| {
                Document::new(id.clone(), vocab.encode(tokens)).expect("nonempty doc")
            })
            .collect();
        let stats = CollectionStats::from_vocabulary(&vocab);
        let mut rng = Rng::from_seed(seed);
        let embeddings = EmbeddingTable::random(vocab.size(), embed_dim, &mut rng);
        ProbeContext { docs: encoded, vocab, stats, embeddings }
    }
}

/// Knobs for probe construction.
#[derive(Debug, Clone)]
pub struct ProbeOptions {
    /// Term-frequency edits happen at 0-based positions at or beyond this.
    pub edit_min_pos: usize,
    /// Require the probed term to be absent from the base document.
    pub fresh_term: bool,
    /// Exact occurrences planted by semantic-balance probes.
    pub tsfc_exact_count: usize,
    /// Relative tolerance on the semantic-mass balance.
    pub tsfc_epsilon_rel: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            edit_min_pos: 0,
            fresh_term: false,
            tsfc_exact_count: 4,
            tsfc_epsilon_rel: 0.05,
        }
    }
}

const TERM_SEARCH_TRIES: usize = 200;
const BALANCE_ITERATIONS: usize = 300;

/// Samples a probed term: present in the collection, rare enough that its
/// clamped idf stays strictly positive (df <= N/3), and absent from `base`
/// when `fresh` demands it.
fn pick_term(
    ctx: &ProbeContext,
    base: Option<&Document>,
    fresh: bool,
    rng: &mut Rng,
) -> Option<u32> {
    let ids: Vec<u32> = ctx.vocab.known_ids().collect();
    if ids.is_empty() {
        return None;
    }
    let n = ctx.stats.n_docs;
    for _ in 0..TERM_SEARCH_TRIES {
        let w = ids[rng.below(ids.len())];
        if ctx.stats.df(w) == 0 || ctx.stats.df(w) > n / 3 || ctx.stats.cf(w) == 0 {
            continue;
        }
        if fresh {
            if let Some(doc) = base {
                if doc.tokens.contains(&w) {
                    continue;
                }
            }
        }
        return Some(w);
    }
    None
}

/// A replacement token distinct from everything in `exclude`.
fn pick_filler(ctx: &ProbeContext, exclude: &[u32], rng: &mut Rng) -> Option<u32> {
    let ids: Vec<u32> = ctx.vocab.known_ids().collect();
    for _ in 0..TERM_SEARCH_TRIES {
        let t = ids[rng.below(ids.len())];
        if !exclude.contains(&t) {
            return Some(t);
        }
    }
    None
}

fn doc(id: &str, tokens: Vec<u32>) -> Document {
    Document::new(String::from(id), tokens).expect("probe documents are nonempty")
}

fn count_of(tokens: &[u32], w: u32) -> u64 {
    tokens.iter().filter(|&&t| t == w).count() as u64
}

/// Constructs one probe for `axiom` from `base`. Returns `Err(reason)` when
/// the construction is impossible for this base and options.
pub fn gen_probe(
    axiom: AxiomId,
    base: &Document,
    ctx: &ProbeContext,
    similarity: Option<(&EmbeddingTable, SimilarityKind)>,
    options: &ProbeOptions,
    rng: &mut Rng,
) -> Result<AxiomProbe, SkipReason> {
    match axiom {
        AxiomId::Tfc1 => gen_tfc1(base, ctx, options, rng),
        AxiomId::Tfc2 => gen_tfc2(base, ctx, options, rng),
        AxiomId::Tdc => gen_tdc(base, ctx, rng),
        AxiomId::Lnc1 => gen_lnc1(base, ctx, rng),
        AxiomId::Lnc2 => gen_lnc2(base, ctx, rng),
        AxiomId::TfLnc => gen_tf_lnc(base, ctx, options, rng),
        AxiomId::Tsfc => {
            let fallback = (&ctx.embeddings, SimilarityKind::Cosine);
            let (table, kind) = similarity.unwrap_or(fallback);
            gen_tsfc(base, ctx, table, kind, options, rng)
        }
    }
}

fn gen_tfc1(
    base: &Document,
    ctx: &ProbeContext,
    options: &ProbeOptions,
    rng: &mut Rng,
) -> Result<AxiomProbe, SkipReason> {
    let w = pick_term(ctx, Some(base), options.fresh_term, rng).ok_or(SkipReason::NoEligibleTerm)?;
    let eligible: Vec<usize> = (options.edit_min_pos..base.tokens.len())
        .filter(|&p| base.tokens[p] != w)
        .collect();
    if eligible.is_empty() {
        return Err(SkipReason::BaseTooShort);
    }
    let p = eligible[rng.below(eligible.len())];
    let mut d1_tokens = base.tokens.clone();
    d1_tokens[p] = w;
    let t0 = count_of(&base.tokens, w);
    let len = base.tokens.len();
    Ok(AxiomProbe {
        axiom: AxiomId::Tfc1,
        query: Query::new(String::from("probe"), alloc::vec![w]),
        d1: doc("tfc1-d1", d1_tokens),
        d2: doc("tfc1-d2", base.tokens.clone()),
        d3: None,
        expectation: Expectation::StrictOrder,
        meta: ProbeMeta {
            exact_counts: alloc::vec![(w, t0 + 1, t0)],
            semantic: None,
            lengths: (len, len, None),
        },
    })
}

fn gen_tfc2(
    base: &Document,
    ctx: &ProbeContext,
    _options: &ProbeOptions,
    rng: &mut Rng,
) -> Result<AxiomProbe, SkipReason> {
    let w = pick_term(ctx, None, false, rng).ok_or(SkipReason::NoEligibleTerm)?;
    let filler = pick_filler(ctx, &[w], rng).ok_or(SkipReason::NoEligibleTerm)?;
    let mut cleared = base.tokens.clone();
    for t in &mut cleared {
        if *t == w {
            *t = filler;
        }
    }
    if cleared.len() < 3 {
        return Err(SkipReason::BaseTooShort);
    }
    let mut positions: Vec<usize> = (0..cleared.len()).collect();
    rng.shuffle(&mut positions);
    let (p1, p2, p3) = (positions[0], positions[1], positions[2]);
    let make = |planted: &[usize]| {
        let mut t = cleared.clone();
        for &p in planted {
            t[p] = w;
        }
        t
    };
    let len = cleared.len();
    Ok(AxiomProbe {
        axiom: AxiomId::Tfc2,
        query: Query::new(String::from("probe"), alloc::vec![w]),
        d1: doc("tfc2-d1", make(&[p1])),
        d2: doc("tfc2-d2", make(&[p1, p2])),
        d3: Some(doc("tfc2-d3", make(&[p1, p2, p3]))),
        expectation: Expectation::DiminishingGain,
        meta: ProbeMeta {
            exact_counts: alloc::vec![(w, 1, 2)],
            semantic: None,
            lengths: (len, len, Some(len)),
        },
    })
}

fn gen_tdc(
    base: &Document,
    ctx: &ProbeContext,
    rng: &mut Rng,
) -> Result<AxiomProbe, SkipReason> {
    // Two eligible terms with strictly different document frequencies; the
    // rarer one is the discriminative term w1.
    let mut pair = None;
    for _ in 0..TERM_SEARCH_TRIES {
        let a = pick_term(ctx, None, false, rng).ok_or(SkipReason::NoEligibleTerm)?;
        let b = pick_term(ctx, None, false, rng).ok_or(SkipReason::NoEligibleTerm)?;
        if a != b && ctx.stats.df(a) != ctx.stats.df(b) {
            pair = Some(if ctx.stats.df(a) < ctx.stats.df(b) { (a, b) } else { (b, a) });
            break;
        }
    }
    let (w1, w2) = pair.ok_or(SkipReason::NoEligibleTerm)?;
    let filler = pick_filler(ctx, &[w1, w2], rng).ok_or(SkipReason::NoEligibleTerm)?;
    let mut cleared = base.tokens.clone();
    for t in &mut cleared {
        if *t == w1 || *t == w2 {
            *t = filler;
        }
    }
    if cleared.len() < 4 {
        return Err(SkipReason::BaseTooShort);
    }
    let mut positions: Vec<usize> = (0..cleared.len()).collect();
    rng.shuffle(&mut positions);
    // Equal total query-term count (4), more w1 in d1, more w2 in d2.
    let mut t1 = cleared.clone();
    let mut t2 = cleared;
    for (i, &p) in positions.iter().take(4).enumerate() {
        t1[p] = if i < 3 { w1 } else { w2 };
        t2[p] = if i < 1 { w1 } else { w2 };
    }
    let len = t1.len();
    Ok(AxiomProbe {
        axiom: AxiomId::Tdc,
        query: Query::new(String::from("probe"), alloc::vec![w1, w2]),
        d1: doc("tdc-d1", t1),
        d2: doc("tdc-d2", t2),
        d3: None,
        expectation: Expectation::StrictOrder,
        meta: ProbeMeta {
            exact_counts: alloc::vec![(w1, 3, 1), (w2, 1, 3)],
            semantic: None,
            lengths: (len, len, None),
        },
    })
}

fn gen_lnc1(
    base: &Document,
    ctx: &ProbeContext,
    rng: &mut Rng,
) -> Result<AxiomProbe, SkipReason> {
    if base.tokens.len() < 2 {
        return Err(SkipReason::BaseTooShort);
    }
    // Query terms drawn from the document so the scores are non-trivial.
    let qa = base.tokens[rng.below(base.tokens.len())];
    let qb = base.tokens[rng.below(base.tokens.len())];
    let query: Vec<u32> = if qa == qb { alloc::vec![qa] } else { alloc::vec![qa, qb] };
    let appended = pick_filler(ctx, &query, rng).ok_or(SkipReason::NoEligibleTerm)?;
    let mut longer = base.tokens.clone();
    longer.push(appended);
    let len = base.tokens.len();
    Ok(AxiomProbe {
        axiom: AxiomId::Lnc1,
        query: Query::new(String::from("probe"), query.clone()),
        d1: doc("lnc1-d1", base.tokens.clone()),
        d2: doc("lnc1-d2", longer),
        d3: None,
        expectation: Expectation::WeakOrder,
        meta: ProbeMeta {
            exact_counts: query
                .iter()
                .map(|&w| (w, count_of(&base.tokens, w), count_of(&base.tokens, w)))
                .collect(),
            semantic: None,
            lengths: (len, len + 1, None),
        },
    })
}

fn gen_lnc2(
    base: &Document,
    ctx: &ProbeContext,
    rng: &mut Rng,
) -> Result<AxiomProbe, SkipReason> {
    let _ = ctx;
    if base.tokens.len() < 2 {
        return Err(SkipReason::BaseTooShort);
    }
    let qa = base.tokens[rng.below(base.tokens.len())];
    let qb = base.tokens[rng.below(base.tokens.len())];
    let query: Vec<u32> = if qa == qb { alloc::vec![qa] } else { alloc::vec![qa, qb] };
    // k = 2: the doubled document must not score below the original.
    let mut doubled = base.tokens.clone();
    doubled.extend_from_slice(&base.tokens);
    let len = base.tokens.len();
    Ok(AxiomProbe {
        axiom: AxiomId::Lnc2,
        query: Query::new(String::from("probe"), query.clone()),
        d1: doc("lnc2-d1", doubled),
        d2: doc("lnc2-d2", base.tokens.clone()),
        d3: None,
        expectation: Expectation::WeakOrder,
        meta: ProbeMeta {
            exact_counts: query
                .iter()
                .map(|&w| (w, 2 * count_of(&base.tokens, w), count_of(&base.tokens, w)))
                .collect(),
            semantic: None,
            lengths: (2 * len, len, None),
        },
    })
}

fn gen_tf_lnc(
    base: &Document,
    ctx: &ProbeContext,
    options: &ProbeOptions,
    rng: &mut Rng,
) -> Result<AxiomProbe, SkipReason> {
    let w = pick_term(ctx, Some(base), options.fresh_term, rng).ok_or(SkipReason::NoEligibleTerm)?;
    let copies = 1 + rng.below(2);
    let mut extended = base.tokens.clone();
    for _ in 0..copies {
        extended.push(w);
    }
    let t0 = count_of(&base.tokens, w);
    let len = base.tokens.len();
    Ok(AxiomProbe {
        axiom: AxiomId::TfLnc,
        query: Query::new(String::from("probe"), alloc::vec![w]),
        d1: doc("tflnc-d1", extended),
        d2: doc("tflnc-d2", base.tokens.clone()),
        d3: None,
        expectation: Expectation::StrictOrder,
        meta: ProbeMeta {
            exact_counts: alloc::vec![(w, t0 + copies as u64, t0)],
            semantic: None,
            lengths: (len + copies, len, None),
        },
    })
}

fn gen_tsfc(
    base: &Document,
    ctx: &ProbeContext,
    table: &EmbeddingTable,
    kind: SimilarityKind,
    options: &ProbeOptions,
    rng: &mut Rng,
) -> Result<AxiomProbe, SkipReason> {
    let c1 = options.tsfc_exact_count.max(1);
    if base.tokens.len() < c1 + 4 {
        return Err(SkipReason::BaseTooShort);
    }
    let w = pick_term(ctx, None, false, rng).ok_or(SkipReason::NoEligibleTerm)?;
    let filler = pick_filler(ctx, &[w], rng).ok_or(SkipReason::NoEligibleTerm)?;
    let mut cleared = base.tokens.clone();
    for t in &mut cleared {
        if *t == w {
            *t = filler;
        }
    }

    // Similarities of every vocabulary token to w, ascending, w excluded.
    let mut by_sim: Vec<(f64, u32)> = ctx
        .vocab
        .known_ids()
        .filter(|&t| t != w)
        .map(|t| (kind.similarity(table.row(w), table.row(t)), t))
        .collect();
    by_sim.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite sims"));
    if by_sim.is_empty() {
        return Err(SkipReason::NoEligibleTerm);
    }

    let mut positions: Vec<usize> = (0..cleared.len()).collect();
    rng.shuffle(&mut positions);
    let planted = &positions[..c1];

    let mut d1_tokens = cleared.clone();
    for &p in planted {
        d1_tokens[p] = w;
    }
    let s1 = semantic_mass(w, &d1_tokens, table, kind);
    let epsilon = options.tsfc_epsilon_rel * s1.abs();
    if epsilon <= 0.0 {
        return Err(SkipReason::SemanticBalance);
    }

    // d2: nearest non-identical neighbors in the planted slots, then greedy
    // single-token swaps anywhere until the masses balance.
    let mut d2_tokens = cleared;
    for (i, &p) in planted.iter().enumerate() {
        let (_, neighbor) = by_sim[by_sim.len() - 1 - (i % by_sim.len().min(8))];
        d2_tokens[p] = neighbor;
    }
    let mut s2 = semantic_mass(w, &d2_tokens, table, kind);
    let mut iterations = 0;
    while (s2 - s1).abs() > epsilon {
        iterations += 1;
        if iterations > BALANCE_ITERATIONS {
            return Err(SkipReason::SemanticBalance);
        }
        let deficit = s1 - s2;
        let p = positions[rng.below(positions.len())];
        let old_sim = kind.similarity(table.row(w), table.row(d2_tokens[p]));
        let target = old_sim + deficit;
        // Closest similarity value to the target.
        let idx = by_sim.partition_point(|(s, _)| *s < target);
        let candidate = [idx.wrapping_sub(1), idx]
            .into_iter()
            .filter(|&i| i < by_sim.len())
            .min_by(|&a, &b| {
                let da = (by_sim[a].0 - target).abs();
                let db = (by_sim[b].0 - target).abs();
                da.partial_cmp(&db).expect("finite")
            })
            .expect("nonempty candidate set");
        let (new_sim, new_token) = by_sim[candidate];
        let improved = (s2 - old_sim + new_sim - s1).abs() < (s2 - s1).abs();
        if improved {
            d2_tokens[p] = new_token;
            s2 = s2 - old_sim + new_sim;
        }
    }
    // Remove accumulated float error from the incremental updates.
    let s2 = semantic_mass(w, &d2_tokens, table, kind);
    if (s2 - s1).abs() > epsilon {
        return Err(SkipReason::SemanticBalance);
    }

    let len = d1_tokens.len();
    debug_assert_eq!(count_of(&d2_tokens, w), 0);
    Ok(AxiomProbe {
        axiom: AxiomId::Tsfc,
        query: Query::new(String::from("probe"), alloc::vec![w]),
        d1: doc("tsfc-d1", d1_tokens),
        d2: doc("tsfc-d2", d2_tokens),
        d3: None,
        expectation: Expectation::StrictOrder,
        meta: ProbeMeta {
            exact_counts: alloc::vec![(w, c1 as u64, 0)],
            semantic: Some((s1, s2)),
            lengths: (len, len, None),
        },
    })
}

// ---- checking ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeOutcome {
    Pass,
    Fail,
    Tie,
}

#[derive(Debug, Clone, Copy)]
pub struct CheckResult {
    pub outcome: ProbeOutcome,
    /// Score difference in the expected direction (positive = satisfied).
    pub margin: f64,
}

/// Evaluates one probe. `tie_tol` is relative: the effective tolerance is
/// `tie_tol * max(|s1|, |s2|, 1)`. Strict expectations pass only when the
/// margin clears the tolerance; weak ones pass unless the margin falls
/// below its negative.
pub fn check(
    scorer: &dyn Scorer,
    probe: &AxiomProbe,
    tie_tol: f64,
) -> Result<CheckResult, AxiomError> {
    let eval = |d: &Document| {
        scorer.score(&probe.query, d).map_err(|message| AxiomError::ScorerFailure {
            axiom: probe.axiom,
            scorer: String::from(scorer.name()),
            message,
        })
    };
    let s1 = eval(&probe.d1)?;
    let s2 = eval(&probe.d2)?;
    let (margin, scale) = match probe.expectation {
        Expectation::StrictOrder | Expectation::WeakOrder => {
            (s1 - s2, s1.abs().max(s2.abs()).max(1.0))
        }
        Expectation::DiminishingGain => {
            let s3 = eval(probe.d3.as_ref().expect("three-document probe"))?;
            ((s2 - s1) - (s3 - s2), s1.abs().max(s2.abs()).max(s3.abs()).max(1.0))
        }
    };
    let tol = tie_tol * scale;
    let outcome = match probe.expectation {
        Expectation::StrictOrder => {
            if margin > tol {
                ProbeOutcome::Pass
            } else if margin >= -tol {
                ProbeOutcome::Tie
            } else {
                ProbeOutcome::Fail
            }
        }
        Expectation::WeakOrder | Expectation::DiminishingGain => {
            if margin >= -tol {
                ProbeOutcome::Pass
            } else {
                ProbeOutcome::Fail
            }
        }
    };
    Ok(CheckResult { outcome, margin })
}

// ---- suite ----

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub axioms: Vec<AxiomId>,
    /// Probes attempted per axiom.
    pub n_probes: usize,
    pub seed: u64,
    /// Relative tie tolerance; see [`check`].
    pub tie_tol: f64,
    pub options: ProbeOptions,
    /// Record one row per probe in [`AxiomReport::details`].
    pub detail: bool,
}

impl SuiteConfig {
    pub fn new(n_probes: usize, seed: u64) -> Self {
        SuiteConfig {
            axioms: AxiomId::ALL.to_vec(),
            n_probes,
            seed,
            tie_tol: 1e-9,
            options: ProbeOptions::default(),
            detail: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AxiomStats {
    pub axiom: AxiomId,
    pub attempted: usize,
    /// Probes actually constructed and checked.
    pub run: usize,
    pub pass: usize,
    pub fail: usize,
    pub tie: usize,
    pub skipped: usize,
    pub mean_margin: f64,
}

impl AxiomStats {
    /// Pass rate over checked probes; ties are not passes.
    pub fn pass_rate(&self) -> f64 {
        if self.run == 0 {
            0.0
        } else {
            self.pass as f64 / self.run as f64
        }
    }
}

/// One checked probe, for the per-probe detail output.
#[derive(Debug, Clone)]
pub struct ProbeDetail {
    pub axiom: AxiomId,
    pub index: usize,
    pub outcome: ProbeOutcome,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct AxiomReport {
    pub scorer: String,
    pub stats: Vec<AxiomStats>,
    /// Filled only when [`SuiteConfig::detail`] is set.
    pub details: Vec<ProbeDetail>,
}

impl AxiomReport {
    pub fn for_axiom(&self, axiom: AxiomId) -> Option<&AxiomStats> {
        self.stats.iter().find(|s| s.axiom == axiom)
    }
}

/// Runs `n_probes` probes per configured axiom against the scorer.
/// Deterministic given the seed: each probe draws from its own stream split
/// from the master seed so the set of probes does not depend on which
/// axioms are enabled.
pub fn run_suite(
    scorer: &dyn Scorer,
    ctx: &ProbeContext,
    config: &SuiteConfig,
) -> Result<AxiomReport, AxiomError> {
    assert!(config.n_probes >= 1);
    let similarity = scorer.similarity_context();
    let sim_ref = similarity.as_ref().map(|(t, k)| (t, *k));
    let mut stats = Vec::with_capacity(config.axioms.len());
    let mut details = Vec::new();
    for &axiom in &config.axioms {
        let mut master = Rng::from_seed(config.seed ^ (axiom as u64).wrapping_mul(0x9e37_79b9));
        let mut s = AxiomStats {
            axiom,
            attempted: config.n_probes,
            run: 0,
            pass: 0,
            fail: 0,
            tie: 0,
            skipped: 0,
            mean_margin: 0.0,
        };
        let mut margin_sum = 0.0;
        for index in 0..config.n_probes {
            let mut rng = master.split();
            let base = &ctx.docs[rng.below(ctx.docs.len())];
            match gen_probe(axiom, base, ctx, sim_ref, &config.options, &mut rng) {
                Ok(probe) => {
                    debug_assert!(probe.verify(sim_ref));
                    let result = check(scorer, &probe, config.tie_tol)?;
                    s.run += 1;
                    margin_sum += result.margin;
                    match result.outcome {
                        ProbeOutcome::Pass => s.pass += 1,
                        ProbeOutcome::Fail => s.fail += 1,
                        ProbeOutcome::Tie => s.tie += 1,
                    }
                    if config.detail {
                        details.push(ProbeDetail {
                            axiom,
                            index,
                            outcome: result.outcome,
                            margin: result.margin,
                        });
                    }
                }
                Err(_) => s.skipped += 1,
            }
        }
        s.mean_margin = if s.run > 0 { margin_sum / s.run as f64 } else { 0.0 };
        stats.push(s);
    }
    Ok(AxiomReport { scorer: String::from(scorer.name()), stats, details })
}

/// Boxes a scorer for heterogeneous collections.
pub type BoxedScorer = Box<dyn Scorer>;

impl Scorer for Box<dyn Scorer> {
    fn name(&self) -> &str {
        self.as_ref().name()
    }
    fn score(&self, q: &Query, d: &Document) -> Result<f64, String> {
        self.as_ref().score(q, d)
    }
    fn similarity_context(&self) -> Option<(EmbeddingTable, SimilarityKind)> {
        self.as_ref().similarity_context()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::uniform_corpus;
    use alloc::vec;

    fn context(seed: u64) -> ProbeContext {
        let docs = uniform_corpus(60, 250, (60, 110), seed);
        ProbeContext::from_token_docs(&docs, 16, seed ^ 0xabc)
    }

    fn bm25(ctx: &ProbeContext) -> Bm25Scorer {
        Bm25Scorer { stats: ctx.stats.clone(), params: Bm25Params::default() }
    }

    fn lm(ctx: &ProbeContext) -> LmJmScorer {
        LmJmScorer { stats: ctx.stats.clone(), params: LmParams::default() }
    }

    #[test]
    fn probes_verify_their_own_metadata() {
        let ctx = context(3);
        let mut rng = Rng::from_seed(17);
        let sim = Some((&ctx.embeddings, SimilarityKind::Cosine));
        for axiom in AxiomId::ALL {
            let mut produced = 0;
            while produced < 20 {
                let base = &ctx.docs[rng.below(ctx.docs.len())];
                if let Ok(probe) =
                    gen_probe(axiom, base, &ctx, sim, &ProbeOptions::default(), &mut rng)
                {
                    assert!(probe.verify(sim), "{} metadata drifted", axiom.name());
                    produced += 1;
                }
            }
        }
    }

    #[test]
    fn tfc1_probe_construction_shape() {
        let ctx = context(4);
        let mut rng = Rng::from_seed(5);
        let base = &ctx.docs[0];
        let probe =
            gen_probe(AxiomId::Tfc1, base, &ctx, None, &ProbeOptions::default(), &mut rng)
                .unwrap();
        assert_eq!(probe.d1.tokens.len(), probe.d2.tokens.len());
        let w = probe.query.tokens[0];
        let c1 = probe.d1.tokens.iter().filter(|&&t| t == w).count();
        let c2 = probe.d2.tokens.iter().filter(|&&t| t == w).count();
        assert_eq!(c1, c2 + 1);
    }

    #[test]
    fn lnc2_doubles_document_length_exactly() {
        let ctx = context(5);
        let mut rng = Rng::from_seed(6);
        let base = &ctx.docs[1];
        let probe =
            gen_probe(AxiomId::Lnc2, base, &ctx, None, &ProbeOptions::default(), &mut rng)
                .unwrap();
        assert_eq!(probe.d1.tokens.len(), 2 * probe.d2.tokens.len());
    }

    #[test]
    fn tsfc_semantic_masses_balance_within_tolerance() {
        let ctx = context(7);
        let mut rng = Rng::from_seed(8);
        let options = ProbeOptions::default();
        let sim = Some((&ctx.embeddings, SimilarityKind::Cosine));
        let mut produced = 0;
        let mut attempts = 0;
        while produced < 10 && attempts < 400 {
            attempts += 1;
            let base = &ctx.docs[rng.below(ctx.docs.len())];
            if let Ok(probe) = gen_probe(AxiomId::Tsfc, base, &ctx, sim, &options, &mut rng) {
                let (s1, s2) = probe.meta.semantic.unwrap();
                assert!((s1 - s2).abs() <= options.tsfc_epsilon_rel * s1.abs());
                let c = &probe.meta.exact_counts[0];
                assert!(c.1 > c.2);
                produced += 1;
            }
        }
        assert!(produced >= 10, "only {produced} semantic probes in {attempts} attempts");
    }

    #[test]
    fn bm25_passes_its_guaranteed_axioms() {
        let ctx = context(9);
        let scorer = bm25(&ctx);
        let config = SuiteConfig::new(60, 31);
        let report = run_suite(&scorer, &ctx, &config).unwrap();
        for axiom in [AxiomId::Tfc1, AxiomId::Tdc, AxiomId::Lnc1, AxiomId::TfLnc] {
            let s = report.for_axiom(axiom).unwrap();
            assert!(s.run > 0);
            assert_eq!(s.pass_rate(), 1.0, "{}: {s:?}", axiom.name());
        }
        // The diminishing-gain and concatenation constraints also hold for
        // this scorer family.
        assert_eq!(report.for_axiom(AxiomId::Tfc2).unwrap().pass_rate(), 1.0);
        assert_eq!(report.for_axiom(AxiomId::Lnc2).unwrap().pass_rate(), 1.0);
    }

    #[test]
    fn lm_jm_passes_tfc1_and_lnc1() {
        let ctx = context(10);
        let scorer = lm(&ctx);
        let config = SuiteConfig::new(60, 32);
        let report = run_suite(&scorer, &ctx, &config).unwrap();
        assert_eq!(report.for_axiom(AxiomId::Tfc1).unwrap().pass_rate(), 1.0);
        assert_eq!(report.for_axiom(AxiomId::Lnc1).unwrap().pass_rate(), 1.0);
    }

    #[test]
    fn constant_scorer_fails_strict_and_passes_weak() {
        struct Constant;
        impl Scorer for Constant {
            fn name(&self) -> &str {
                "zero"
            }
            fn score(&self, _q: &Query, _d: &Document) -> Result<f64, String> {
                Ok(0.0)
            }
        }
        let ctx = context(11);
        let config = SuiteConfig::new(30, 33);
        let report = run_suite(&Constant, &ctx, &config).unwrap();
        for s in &report.stats {
            match s.axiom {
                AxiomId::Tfc1 | AxiomId::Tdc | AxiomId::TfLnc | AxiomId::Tsfc => {
                    assert_eq!(s.pass, 0, "{}", s.axiom.name());
                    assert_eq!(s.tie, s.run, "{}", s.axiom.name());
                }
                AxiomId::Tfc2 | AxiomId::Lnc1 | AxiomId::Lnc2 => {
                    assert_eq!(s.pass_rate(), 1.0, "{}", s.axiom.name());
                }
            }
        }
    }

    #[test]
    fn same_seed_same_report() {
        let ctx = context(12);
        let scorer = bm25(&ctx);
        let config = SuiteConfig::new(25, 99);
        let a = run_suite(&scorer, &ctx, &config).unwrap();
        let b = run_suite(&scorer, &ctx, &config).unwrap();
        for (x, y) in a.stats.iter().zip(&b.stats) {
            assert_eq!(x.pass, y.pass);
            assert_eq!(x.mean_margin, y.mean_margin);
        }
    }

    #[test]
    fn checks_are_invariant_under_increasing_transforms() {
        struct Affine<S>(S);
        impl<S: Scorer> Scorer for Affine<S> {
            fn name(&self) -> &str {
                "affine"
            }
            fn score(&self, q: &Query, d: &Document) -> Result<f64, String> {
                Ok(3.5 * self.0.score(q, d)? + 11.0)
            }
        }
        let ctx = context(13);
        let plain = bm25(&ctx);
        let transformed = Affine(bm25(&ctx));
        let config = SuiteConfig::new(40, 55);
        let a = run_suite(&plain, &ctx, &config).unwrap();
        let b = run_suite(&transformed, &ctx, &config).unwrap();
        for (x, y) in a.stats.iter().zip(&b.stats) {
            assert_eq!(x.pass, y.pass, "{}", x.axiom.name());
            assert_eq!(x.fail, y.fail);
            assert_eq!(x.tie, y.tie);
        }
    }

    #[test]
    fn truncating_wrapper_ties_edits_beyond_the_cut() {
        let docs = uniform_corpus(40, 250, (120, 160), 21);
        let ctx = ProbeContext::from_token_docs(&docs, 16, 22);
        let inner = Bm25Scorer { stats: ctx.stats.clone(), params: Bm25Params::default() };
        let scorer = TruncateScorer::new(inner, 100);
        let mut config = SuiteConfig::new(40, 77);
        config.axioms = vec![AxiomId::Tfc1];
        config.options.edit_min_pos = 100;
        config.options.fresh_term = true;
        let report = run_suite(&scorer, &ctx, &config).unwrap();
        let s = report.for_axiom(AxiomId::Tfc1).unwrap();
        assert!(s.run > 0);
        assert_eq!(s.pass, 0);
        assert_eq!(s.tie, s.run);
    }
}
