//! Interaction-focused matcher: word-pair similarity matrix, a small 2-D
//! convolution over it, dynamic max pooling onto a fixed grid, and an MLP.

use alloc::vec::Vec;

use crate::rng::Rng;
use crate::tensor::{NodeId, ParamId, ParamStore, Tape};

use super::{
    init_tensor, init_tensor_positive, zeros_tensor, EmbeddingTable, MatchError, Matcher,
    ScoreTrace, SimilarityKind,
};

#[derive(Debug, Clone)]
pub struct IntConfig {
    pub embed_dim: usize,
    /// Convolution channels over the interaction matrix.
    pub channels: usize,
    /// Square kernel side.
    pub kernel: usize,
    /// Dynamic pooling grid `(query bins, document bins)`; the pooled size
    /// is fixed regardless of input lengths.
    pub grid: (usize, usize),
    /// Width of the final hidden layer.
    pub hidden: usize,
    pub similarity: SimilarityKind,
    /// Pool each query-term row of the interaction matrix individually and
    /// feed the row maxima to the MLP alongside the convolved features.
    pub row_pooling: bool,
    pub max_doc_len: usize,
}

impl Default for IntConfig {
    fn default() -> Self {
        IntConfig {
            embed_dim: 50,
            channels: 8,
            kernel: 3,
            grid: (3, 10),
            hidden: 20,
            similarity: SimilarityKind::Cosine,
            row_pooling: false,
            max_doc_len: 500,
        }
    }
}

/// Interaction-matrix matcher. Inputs shorter than the convolution kernel
/// are padded with the similarity kind's floor value so padding never looks
/// like a match; inputs smaller than the pooling grid repeat cells instead.
#[derive(Debug, Clone)]
pub struct IntModel {
    config: IntConfig,
    vocab_size: usize,
    store: ParamStore,
    embed: ParamId,
    kernel: ParamId,
    kernel_bias: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl IntModel {
    pub fn new(vocab_size: usize, config: IntConfig, rng: &mut Rng) -> Self {
        let table = EmbeddingTable::random(vocab_size, config.embed_dim, rng);
        IntModel::with_embeddings(table, config, rng)
    }

    /// Builds the model around a caller-supplied embedding table.
    pub fn with_embeddings(table: EmbeddingTable, config: IntConfig, rng: &mut Rng) -> Self {
        assert_eq!(table.dim(), config.embed_dim);
        let vocab_size = table.vocab_size();
        let mut store = ParamStore::new();
        let embed = store.add("embed", table.to_tensor()).expect("fresh store");
        let kernel = store
            .add(
                "conv.k",
                init_tensor(alloc::vec![config.channels, config.kernel, config.kernel, 1], rng),
            )
            .expect("fresh");
        let kernel_bias =
            store.add("conv.k.bias", zeros_tensor(alloc::vec![config.channels])).expect("fresh");
        let mlp_in = config.grid.0 * config.grid.1 * config.channels
            + if config.row_pooling { config.grid.0 } else { 0 };
        let w1 = store
            .add("mlp.w1", init_tensor_positive(alloc::vec![config.hidden, mlp_in], rng))
            .expect("fresh");
        let b1 = store.add("mlp.b1", zeros_tensor(alloc::vec![config.hidden])).expect("fresh");
        let w2 = store
            .add("mlp.w2", init_tensor_positive(alloc::vec![1, config.hidden], rng))
            .expect("fresh");
        let b2 = store.add("mlp.b2", zeros_tensor(alloc::vec![1])).expect("fresh");
        IntModel { config, vocab_size, store, embed, kernel, kernel_bias, w1, b1, w2, b2 }
    }

    pub fn config(&self) -> &IntConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Rebuilds a model around parameters loaded from a checkpoint.
    pub fn from_parts(vocab_size: usize, config: IntConfig, store: ParamStore) -> Self {
        let embed = store.id_of("embed").expect("embed param");
        let kernel = store.id_of("conv.k").expect("conv.k");
        let kernel_bias = store.id_of("conv.k.bias").expect("conv.k.bias");
        let w1 = store.id_of("mlp.w1").expect("mlp.w1");
        let b1 = store.id_of("mlp.b1").expect("mlp.b1");
        let w2 = store.id_of("mlp.w2").expect("mlp.w2");
        let b2 = store.id_of("mlp.b2").expect("mlp.b2");
        IntModel { config, vocab_size, store, embed, kernel, kernel_bias, w1, b1, w2, b2 }
    }

    fn forward(&self, tape: &mut Tape, q: &[u32], d: &[u32]) -> Result<IntForward, MatchError> {
        if q.is_empty() {
            return Err(MatchError::EmptyQuery);
        }
        if d.is_empty() {
            return Err(MatchError::EmptyDocument);
        }
        let d = &d[..d.len().min(self.config.max_doc_len)];
        let (m, n) = (q.len(), d.len());
        let k = self.config.kernel;

        let qe = tape.embed(self.embed, q)?;
        let de = tape.embed(self.embed, d)?;
        let sim = tape.sim_matrix(qe, de, self.config.similarity)?;

        let ph = m.max(k);
        let pw = n.max(k);
        let padded = if ph > m || pw > n {
            tape.pad2d(sim, ph, pw, self.config.similarity.floor_value())?
        } else {
            sim
        };
        let x3 = tape.reshape(padded, alloc::vec![ph, pw, 1])?;
        let conv = tape.conv2d(x3, self.kernel, Some(self.kernel_bias))?;
        let feat = tape.relu(conv);
        let pooled = tape.dyn_maxpool2d(feat, self.config.grid)?;
        let pooled_len =
            self.config.grid.0 * self.config.grid.1 * self.config.channels;
        let flat = tape.reshape(pooled, alloc::vec![pooled_len])?;

        let (mlp_in, row_pool_node) = if self.config.row_pooling {
            let rm = tape.row_max(sim)?;
            let rp = tape.dyn_maxpool1d(rm, self.config.grid.0)?;
            (tape.concat(&[flat, rp])?, Some(rm))
        } else {
            (flat, None)
        };
        let pre = tape.dense(mlp_in, self.w1, self.b1)?;
        let hidden = tape.tanh(pre);
        let score = tape.dense(hidden, self.w2, self.b2)?;
        Ok(IntForward {
            score,
            hidden,
            sim,
            pooled,
            row_pool_node,
            m,
            n,
            feat_cols: pw - k + 1,
        })
    }
}

struct IntForward {
    score: NodeId,
    hidden: NodeId,
    sim: NodeId,
    pooled: NodeId,
    row_pool_node: Option<NodeId>,
    m: usize,
    n: usize,
    feat_cols: usize,
}

impl Matcher for IntModel {
    fn build_score(&self, tape: &mut Tape, q: &[u32], d: &[u32]) -> Result<NodeId, MatchError> {
        Ok(self.forward(tape, q, d)?.score)
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn embedding_param(&self) -> ParamId {
        self.embed
    }

    fn similarity_kind(&self) -> Option<SimilarityKind> {
        Some(self.config.similarity)
    }

    fn score_traced(&self, q: &[u32], d: &[u32]) -> Result<ScoreTrace, MatchError> {
        let mut tape = Tape::new(&self.store);
        let fwd = self.forward(&mut tape, q, d)?;
        let k = self.config.kernel;
        let channels = self.config.channels;
        let sim_vals = tape.value(fwd.sim).data();
        let (m, n) = (fwd.m, fwd.n);

        // Each pooled cell's argmax addresses a convolved feature cell;
        // within that cell's k x k receptive field over the interaction
        // matrix, the strongest real (unpadded) entry names the query row
        // and document position the pool selected.
        let mut doc_positions = Vec::new();
        let mut query_positions = Vec::new();
        let argmax = tape.pool_argmax(fwd.pooled).expect("pool node");
        for &flat in argmax {
            let fy = flat / (fwd.feat_cols * channels);
            let fx = (flat / channels) % fwd.feat_cols;
            let mut best = f64::NEG_INFINITY;
            let mut best_cell = None;
            for y in fy..(fy + k).min(m) {
                for x in fx..(fx + k).min(n) {
                    let v = sim_vals[y * n + x];
                    if v > best {
                        best = v;
                        best_cell = Some((y, x));
                    }
                }
            }
            if let Some((y, x)) = best_cell {
                query_positions.push(y);
                doc_positions.push(x);
            }
        }

        let row_pool = match fwd.row_pool_node {
            Some(rm) => tape
                .pool_argmax(rm)
                .expect("row max node")
                .iter()
                .enumerate()
                .map(|(row, &flat)| (row, flat % n))
                .collect(),
            None => Vec::new(),
        };

        Ok(ScoreTrace {
            score: tape.scalar_value(fwd.score),
            doc_pool_positions: doc_positions,
            query_pool_positions: query_positions,
            hidden: tape.value(fwd.hidden).data().to_vec(),
            row_pool,
        })
    }
}
