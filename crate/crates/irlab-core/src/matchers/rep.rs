//! Representation-focused matcher: one shared convolutional tower encodes
//! query and document independently; an MLP scores the concatenated
//! representations.

use alloc::vec::Vec;

use crate::rng::Rng;
use crate::tensor::{NodeId, ParamId, ParamStore, Tape};

use super::{
    init_tensor, init_tensor_positive, param_name, zeros_tensor, EmbeddingTable, MatchError,
    Matcher, ScoreTrace, SimilarityKind,
};

#[derive(Debug, Clone)]
pub struct RepConfig {
    pub embed_dim: usize,
    /// Convolution channels per kernel width.
    pub channels: usize,
    /// Kernel widths of the tower, e.g. `[2, 3]`.
    pub widths: Vec<usize>,
    /// Width of the final hidden layer.
    pub hidden: usize,
    /// Documents are cut to this many tokens before encoding.
    pub max_doc_len: usize,
}

impl Default for RepConfig {
    fn default() -> Self {
        RepConfig {
            embed_dim: 50,
            channels: 32,
            widths: alloc::vec![2, 3],
            hidden: 20,
            max_doc_len: 500,
        }
    }
}

/// Per kernel width, the pooled argmax rows (one per channel).
type TowerHits = Vec<(usize, Vec<usize>)>;

/// Siamese convolutional matcher. The query tower and the document tower
/// are the same parameters, not copies: both sides call the identical
/// kernel, bias, and embedding ids.
#[derive(Debug, Clone)]
pub struct RepModel {
    config: RepConfig,
    vocab_size: usize,
    store: ParamStore,
    embed: ParamId,
    convs: Vec<(ParamId, ParamId)>,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl RepModel {
    pub fn new(vocab_size: usize, config: RepConfig, rng: &mut Rng) -> Self {
        let table = EmbeddingTable::random(vocab_size, config.embed_dim, rng);
        RepModel::with_embeddings(table, config, rng)
    }

    /// Builds the model around a caller-supplied embedding table.
    pub fn with_embeddings(table: EmbeddingTable, config: RepConfig, rng: &mut Rng) -> Self {
        assert!(!config.widths.is_empty());
        assert_eq!(table.dim(), config.embed_dim);
        let vocab_size = table.vocab_size();
        let mut store = ParamStore::new();
        let embed = store.add("embed", table.to_tensor()).expect("fresh store");
        let mut convs = Vec::new();
        for &width in &config.widths {
            let mut suffix = alloc::string::String::new();
            {
                use core::fmt::Write;
                let _ = write!(suffix, "w{width}");
            }
            let k = store
                .add(
                    &param_name("conv", &suffix),
                    init_tensor(alloc::vec![config.channels, width, config.embed_dim], rng),
                )
                .expect("unique widths");
            let mut bias_suffix = suffix.clone();
            bias_suffix.push_str(".bias");
            let b = store
                .add(
                    &param_name("conv", &bias_suffix),
                    zeros_tensor(alloc::vec![config.channels]),
                )
                .expect("unique widths");
            convs.push((k, b));
        }
        let rep_dim = config.channels * config.widths.len();
        let w1 = store
            .add("mlp.w1", init_tensor_positive(alloc::vec![config.hidden, 2 * rep_dim], rng))
            .expect("fresh");
        let b1 = store.add("mlp.b1", zeros_tensor(alloc::vec![config.hidden])).expect("fresh");
        let w2 = store
            .add("mlp.w2", init_tensor_positive(alloc::vec![1, config.hidden], rng))
            .expect("fresh");
        let b2 = store.add("mlp.b2", zeros_tensor(alloc::vec![1])).expect("fresh");
        RepModel { config, vocab_size, store, embed, convs, w1, b1, w2, b2 }
    }

    pub fn config(&self) -> &RepConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Rebuilds a model around parameters loaded from a checkpoint.
    pub fn from_parts(vocab_size: usize, config: RepConfig, store: ParamStore) -> Self {
        let embed = store.id_of("embed").expect("embed param");
        let mut convs = Vec::new();
        for &width in &config.widths {
            let mut name = alloc::string::String::from("conv.w");
            {
                use core::fmt::Write;
                let _ = write!(name, "{width}");
            }
            let k = store.id_of(&name).expect("conv kernel param");
            name.push_str(".bias");
            let b = store.id_of(&name).expect("conv bias param");
            convs.push((k, b));
        }
        let w1 = store.id_of("mlp.w1").expect("mlp.w1");
        let b1 = store.id_of("mlp.b1").expect("mlp.b1");
        let w2 = store.id_of("mlp.w2").expect("mlp.w2");
        let b2 = store.id_of("mlp.b2").expect("mlp.b2");
        RepModel { config, vocab_size, store, embed, convs, w1, b1, w2, b2 }
    }

    fn max_width(&self) -> usize {
        self.config.widths.iter().copied().max().unwrap_or(1)
    }

    /// Encodes one token sequence: per width, valid convolution, relu, and
    /// a max pool over all positions; pooled channels are concatenated.
    /// Returns the representation node and, per width, the pooling argmax
    /// positions (conv output rows), one per channel.
    fn tower(
        &self,
        tape: &mut Tape,
        tokens: &[u32],
    ) -> Result<(NodeId, TowerHits), MatchError> {
        // Short inputs are padded with OOV (zero embedding) up to the
        // largest kernel width.
        let mut padded: Vec<u32> = tokens.to_vec();
        while padded.len() < self.max_width() {
            padded.push(crate::text::OOV_ID);
        }
        let e = tape.embed(self.embed, &padded)?;
        let mut pooled = Vec::with_capacity(self.convs.len());
        let mut hits = Vec::with_capacity(self.convs.len());
        for (&width, &(k, b)) in self.config.widths.iter().zip(&self.convs) {
            let c = tape.conv1d(e, k, Some(b))?;
            let r = tape.relu(c);
            let out_len = padded.len() - width + 1;
            let p = tape.maxpool1d(r, out_len)?;
            let argmax = tape.pool_argmax(p).expect("pool node").to_vec();
            let rows: Vec<usize> =
                argmax.iter().map(|&flat| flat / self.config.channels).collect();
            hits.push((width, rows));
            let flat = tape.reshape(p, alloc::vec![self.config.channels])?;
            pooled.push(flat);
        }
        let rep = tape.concat(&pooled)?;
        Ok((rep, hits))
    }

    fn forward(
        &self,
        tape: &mut Tape,
        q: &[u32],
        d: &[u32],
    ) -> Result<RepForward, MatchError> {
        if q.is_empty() {
            return Err(MatchError::EmptyQuery);
        }
        if d.is_empty() {
            return Err(MatchError::EmptyDocument);
        }
        let d = &d[..d.len().min(self.config.max_doc_len)];
        let (q_rep, q_hits) = self.tower(tape, q)?;
        let (d_rep, d_hits) = self.tower(tape, d)?;
        let joined = tape.concat(&[q_rep, d_rep])?;
        let pre = tape.dense(joined, self.w1, self.b1)?;
        let hidden = tape.tanh(pre);
        let score = tape.dense(hidden, self.w2, self.b2)?;
        Ok(RepForward { score, hidden, q_hits, d_hits, q_len: q.len(), d_len: d.len() })
    }

    /// Maps pooling hits (conv rows) to the real token positions each
    /// winning window covers, dropping padding positions.
    fn hit_positions(hits: &TowerHits, real_len: usize) -> Vec<usize> {
        let mut positions = Vec::new();
        for (width, rows) in hits {
            for &row in rows {
                for pos in row..row + width {
                    if pos < real_len {
                        positions.push(pos);
                    }
                }
            }
        }
        positions
    }
}

struct RepForward {
    score: NodeId,
    hidden: NodeId,
    q_hits: TowerHits,
    d_hits: TowerHits,
    q_len: usize,
    d_len: usize,
}

impl Matcher for RepModel {
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
        None
    }

    fn score_traced(&self, q: &[u32], d: &[u32]) -> Result<ScoreTrace, MatchError> {
        let mut tape = Tape::new(&self.store);
        let fwd = self.forward(&mut tape, q, d)?;
        Ok(ScoreTrace {
            score: tape.scalar_value(fwd.score),
            doc_pool_positions: Self::hit_positions(&fwd.d_hits, fwd.d_len),
            query_pool_positions: Self::hit_positions(&fwd.q_hits, fwd.q_len),
            hidden: tape.value(fwd.hidden).data().to_vec(),
            row_pool: Vec::new(),
        })
    }
}
