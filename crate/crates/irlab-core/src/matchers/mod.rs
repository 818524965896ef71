//! The two toy deep matching families plus their shared pieces: word-pair
//! similarity functions, the embedding table, pooling traces, and the
//! pairwise hinge training loop.
//!
//! [`RepModel`] encodes query and document independently with one shared
//! (Siamese) convolutional tower per side and scores the concatenated
//! representations with an MLP. [`IntModel`] builds a word-by-word
//! interaction matrix first and composes matching patterns from it with a
//! small convolution, dynamic pooling to a fixed grid, and an MLP.

mod int;
mod rep;
mod train;

pub use int::{IntConfig, IntModel};
pub use rep::{RepConfig, RepModel};
pub use train::{train_pairwise, TrainHyper, Triple};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::float;
use crate::rng::Rng;
use crate::tensor::{NodeId, ParamStore, Tape, Tensor, TensorError};

/// Word-pair similarity function for interaction matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimilarityKind {
    Dot,
    Cosine,
    Gaussian { sigma: f64 },
}

impl SimilarityKind {
    /// `sim(u, v)`. Dot is unbounded; cosine lies in `[-1, 1]` and is 0 when
    /// either vector is zero; the gaussian kernel
    /// `exp(-|u - v|^2 / (2 sigma^2))` lies in `(0, 1]` and is exactly 1 for
    /// identical vectors.
    pub fn similarity(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), v.len());
        match *self {
            SimilarityKind::Dot => dot(u, v),
            SimilarityKind::Cosine => {
                let nu = float::sqrt(dot(u, u));
                let nv = float::sqrt(dot(v, v));
                if nu == 0.0 || nv == 0.0 {
                    0.0
                } else {
                    dot(u, v) / (nu * nv)
                }
            }
            SimilarityKind::Gaussian { sigma } => {
                debug_assert!(sigma > 0.0);
                let mut sq = 0.0;
                for (a, b) in u.iter().zip(v) {
                    let d = a - b;
                    sq += d * d;
                }
                float::exp(-sq / (2.0 * sigma * sigma))
            }
        }
    }

    /// Writes `d sim / d u` into `du` and `d sim / d v` into `dv`
    /// (overwriting). The cosine gradient at a zero vector is zero, matching
    /// the zero-similarity convention there.
    pub fn similarity_grad(&self, u: &[f64], v: &[f64], du: &mut [f64], dv: &mut [f64]) {
        match *self {
            SimilarityKind::Dot => {
                du.copy_from_slice(v);
                dv.copy_from_slice(u);
            }
            SimilarityKind::Cosine => {
                let nu = float::sqrt(dot(u, u));
                let nv = float::sqrt(dot(v, v));
                if nu == 0.0 || nv == 0.0 {
                    du.fill(0.0);
                    dv.fill(0.0);
                    return;
                }
                let uv = dot(u, v);
                let c = uv / (nu * nv);
                for i in 0..u.len() {
                    du[i] = v[i] / (nu * nv) - c * u[i] / (nu * nu);
                    dv[i] = u[i] / (nu * nv) - c * v[i] / (nv * nv);
                }
            }
            SimilarityKind::Gaussian { sigma } => {
                let s = self.similarity(u, v);
                let inv = 1.0 / (sigma * sigma);
                for i in 0..u.len() {
                    let g = s * (v[i] - u[i]) * inv;
                    du[i] = g;
                    dv[i] = -g;
                }
            }
        }
    }

    /// Sentinel written into padded interaction cells: at or below the
    /// kind's attainable minimum for the embedding scales used here, so a
    /// padded cell never looks like a match.
    pub fn floor_value(&self) -> f64 {
        match self {
            SimilarityKind::Dot | SimilarityKind::Cosine => -1.0,
            SimilarityKind::Gaussian { .. } => 0.0,
        }
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Word embeddings, one row per vocabulary id. Row 0 (the OOV slot) is the
/// zero vector and stays zero through training.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    vocab_size: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    /// Rows drawn uniformly from `(-0.1, 0.1)`, row 0 zeroed.
    pub fn random(vocab_size: usize, dim: usize, rng: &mut Rng) -> Self {
        assert!(vocab_size >= 1 && dim >= 1);
        let mut data = Vec::with_capacity(vocab_size * dim);
        for _ in 0..vocab_size * dim {
            data.push(rng.uniform(-0.1, 0.1));
        }
        for v in &mut data[..dim] {
            *v = 0.0;
        }
        EmbeddingTable { vocab_size, dim, data }
    }

    /// Rows with the geometry of pretrained word vectors: tokens group
    /// around cluster centers (semantic neighborhoods) and row norms vary.
    /// Under the dot product a longer-normed neighbor can score above a
    /// token's own self-similarity, while the gaussian kernel still peaks
    /// at exact identity; this is the regime the semantic-balance probes
    /// target. Row 0 stays zero.
    pub fn clustered(vocab_size: usize, dim: usize, n_clusters: usize, rng: &mut Rng) -> Self {
        assert!(vocab_size >= 1 && dim >= 1 && n_clusters >= 1);
        let mut centers = Vec::with_capacity(n_clusters);
        for _ in 0..n_clusters {
            let c: Vec<f64> = (0..dim).map(|_| rng.uniform(-0.1, 0.1)).collect();
            centers.push(c);
        }
        let mut data = Vec::with_capacity(vocab_size * dim);
        for _ in 0..vocab_size {
            let center = &centers[rng.below(n_clusters)];
            let scale = rng.uniform(0.6, 1.8);
            for c in center {
                data.push(scale * (c + rng.uniform(-0.02, 0.02)));
            }
        }
        EmbeddingTable::from_rows(vocab_size, dim, data)
    }

    /// Wraps existing rows; row 0 is forced to zero.
    pub fn from_rows(vocab_size: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), vocab_size * dim);
        let mut table = EmbeddingTable { vocab_size, dim, data };
        for v in &mut table.data[..dim] {
            *v = 0.0;
        }
        table
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, id: u32) -> &[f64] {
        let i = id as usize;
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn to_tensor(&self) -> Tensor {
        Tensor::new(alloc::vec![self.vocab_size, self.dim], self.data.clone())
    }

    pub(crate) fn from_tensor(t: &Tensor) -> Self {
        let shape = t.shape();
        EmbeddingTable::from_rows(shape[0], shape[1], t.data().to_vec())
    }
}

/// Word-by-word interaction matrix: entry `(i, j)` is the similarity of
/// query token `i` and document token `j`. Row-major `m x n`.
pub fn interaction_matrix(
    q: &[u32],
    d: &[u32],
    table: &EmbeddingTable,
    kind: SimilarityKind,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(q.len() * d.len());
    for &qi in q {
        let u = table.row(qi);
        for &dj in d {
            out.push(kind.similarity(u, table.row(dj)));
        }
    }
    out
}

/// Sum of similarities between one token and every token of a document,
/// exact matches included.
pub fn semantic_mass(w: u32, d: &[u32], table: &EmbeddingTable, kind: SimilarityKind) -> f64 {
    let u = table.row(w);
    d.iter().map(|&t| kind.similarity(u, table.row(t))).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchError {
    EmptyQuery,
    EmptyDocument,
    Tensor(TensorError),
    /// Training saw a non-finite loss; parameters may be unusable.
    NonFiniteLoss { epoch: usize },
    NoPairs,
}

impl fmt::Display for MatchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchError::EmptyQuery => write!(f, "cannot score an empty query"),
            MatchError::EmptyDocument => write!(f, "cannot score an empty document"),
            MatchError::Tensor(e) => write!(f, "{e}"),
            MatchError::NonFiniteLoss { epoch } => {
                write!(f, "training aborted: non-finite loss in epoch {epoch}")
            }
            MatchError::NoPairs => write!(f, "pooling-word extraction needs at least one pair"),
        }
    }
}

impl From<TensorError> for MatchError {
    fn from(e: TensorError) -> Self {
        MatchError::Tensor(e)
    }
}

/// What one scoring call recorded for the diagnostics: the score itself,
/// the document (and query) token positions selected by max pooling, the
/// final hidden-layer activations, and for the interaction model with row
/// pooling enabled, one `(query row, document position)` record per query
/// term.
#[derive(Debug, Clone)]
pub struct ScoreTrace {
    pub score: f64,
    pub doc_pool_positions: Vec<usize>,
    pub query_pool_positions: Vec<usize>,
    pub hidden: Vec<f64>,
    pub row_pool: Vec<(usize, usize)>,
}

/// A matcher that scores token id sequences. Both model families implement
/// this; training and the probe wrappers are generic over it.
pub trait Matcher {
    /// Appends the forward pass for one pair to `tape`, returning the score
    /// node.
    fn build_score(&self, tape: &mut Tape, q: &[u32], d: &[u32]) -> Result<NodeId, MatchError>;

    fn store(&self) -> &ParamStore;

    fn store_mut(&mut self) -> &mut ParamStore;

    /// Parameter holding the embedding table, whose row 0 stays zero.
    fn embedding_param(&self) -> crate::tensor::ParamId;

    fn similarity_kind(&self) -> Option<SimilarityKind>;

    /// Scores one pair. Deterministic given parameters.
    fn score(&self, q: &[u32], d: &[u32]) -> Result<f64, MatchError> {
        let mut tape = Tape::new(self.store());
        let node = self.build_score(&mut tape, q, d)?;
        Ok(tape.scalar_value(node))
    }

    /// Scores one pair and extracts the pooling trace.
    fn score_traced(&self, q: &[u32], d: &[u32]) -> Result<ScoreTrace, MatchError>;

    /// A copy of the current embedding table.
    fn embedding_table(&self) -> EmbeddingTable {
        EmbeddingTable::from_tensor(self.store().value(self.embedding_param()))
    }
}

/// Document-side pooling words over a set of pairs, ranked by how often max
/// pooling selected them (count descending, token id ascending). Scores
/// every pair internally, so the records are always populated.
pub fn pooling_words<M: Matcher>(
    model: &M,
    pairs: &[(&[u32], &[u32])],
) -> Result<Vec<(u32, u64)>, MatchError> {
    if pairs.is_empty() {
        return Err(MatchError::NoPairs);
    }
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for (q, d) in pairs {
        let trace = model.score_traced(q, d)?;
        for &pos in &trace.doc_pool_positions {
            *counts.entry(d[pos]).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(u32, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Fraction of document-side pooling events whose word occurs in that
/// pair's own query: how much of what the model attends to is query
/// matching rather than global (topical) document structure.
pub fn pooling_query_rate<M: Matcher>(
    model: &M,
    pairs: &[(&[u32], &[u32])],
) -> Result<f64, MatchError> {
    if pairs.is_empty() {
        return Err(MatchError::NoPairs);
    }
    let mut events = 0u64;
    let mut hits = 0u64;
    for (q, d) in pairs {
        let qset: alloc::collections::BTreeSet<u32> = q.iter().copied().collect();
        let trace = model.score_traced(q, d)?;
        for &pos in &trace.doc_pool_positions {
            events += 1;
            if qset.contains(&d[pos]) {
                hits += 1;
            }
        }
    }
    if events == 0 {
        return Ok(0.0);
    }
    Ok(hits as f64 / events as f64)
}

/// Uniform `(-0.1, 0.1)` initialization for convolution kernels.
pub(crate) fn init_tensor(shape: Vec<usize>, rng: &mut Rng) -> Tensor {
    let len = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(rng.uniform(-0.1, 0.1));
    }
    Tensor::new(shape, data)
}

/// Uniform `[0, 0.1)` initialization for the MLP layers. A fresh model's
/// score is then monotone nondecreasing in every pooled matching feature,
/// so an untrained model already prefers denser matching signals instead of
/// flipping a coin per initialization; training reshapes the signs freely.
pub(crate) fn init_tensor_positive(shape: Vec<usize>, rng: &mut Rng) -> Tensor {
    let len = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(rng.uniform(0.0, 0.1));
    }
    Tensor::new(shape, data)
}

/// Zero-initialized bias tensor.
pub(crate) fn zeros_tensor(shape: Vec<usize>) -> Tensor {
    Tensor::zeros(shape)
}

/// Names a parameter as `prefix.suffix`.
pub(crate) fn param_name(prefix: &str, suffix: &str) -> String {
    let mut s = String::with_capacity(prefix.len() + suffix.len() + 1);
    s.push_str(prefix);
    s.push('.');
    s.push_str(suffix);
    s
}
