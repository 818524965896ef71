//! Synthetic retrieval benchmarks with planted ground truth.
//!
//! Two tasks separate what the two matcher families can learn. In the topic
//! task, the relevant document for a query contains one contiguous word
//! sequence drawn from a global topic pool and irrelevant documents contain
//! none; query terms themselves carry no density signal, so only a
//! document-side detector can solve it. In the density task, the relevant
//! document carries a high planted rate of query-term occurrences and the
//! irrelevant ones a low rate, with no topic sequences anywhere, so only
//! query-document interaction solves it.
//!
//! Every dataset is reproducible bit for bit from its configuration: one
//! generator stream is split per query, and documents are emitted in query
//! order.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::rng::Rng;
use crate::text::Qrels;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_queries: usize,
    pub vocab_size: usize,
    /// Inclusive query length range.
    pub query_len: (usize, usize),
    /// Inclusive document length range.
    pub doc_len: (usize, usize),
    pub n_relevant: usize,
    pub n_irrelevant: usize,
    /// Number of global topic sequences (topic task only).
    pub topic_pool: usize,
    /// Inclusive topic sequence length range.
    pub topic_len: (usize, usize),
    /// Planted query-term rate in relevant documents (density task).
    pub density_relevant: f64,
    /// Planted query-term rate in irrelevant documents (density task).
    pub density_irrelevant: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Paper-scale defaults: 10,000 queries over a 2,000-word vocabulary,
    /// documents of 300-700 tokens, one relevant and four irrelevant
    /// documents per query.
    pub fn full(seed: u64) -> Self {
        SynthConfig {
            n_queries: 10_000,
            vocab_size: 2_000,
            query_len: (2, 8),
            doc_len: (300, 700),
            n_relevant: 1,
            n_irrelevant: 4,
            topic_pool: 20,
            topic_len: (2, 4),
            density_relevant: 0.10,
            density_irrelevant: 0.01,
            seed,
        }
    }

    /// Desk-scale preset: 1,000 queries and 100-200 token documents, same
    /// structure, so the full experiment runs in minutes on a CPU.
    pub fn desk(seed: u64) -> Self {
        SynthConfig {
            n_queries: 1_000,
            doc_len: (100, 200),
            topic_pool: 12,
            ..SynthConfig::full(seed)
        }
    }
}

/// Planted ground truth of one query.
#[derive(Debug, Clone)]
pub enum Annotation {
    Topic {
        /// The contiguous sequence planted in the relevant document.
        sequence: Vec<String>,
        /// Token offset of the planted occurrence.
        position: usize,
    },
    Density {
        relevant_count: usize,
        irrelevant_counts: Vec<usize>,
        /// Planted query-term positions inside the relevant document.
        relevant_positions: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
pub struct QueryRecord {
    pub query_id: String,
    pub relevant_doc_id: String,
    pub annotation: Annotation,
}

/// A generated benchmark: queries, documents, graded judgments, training
/// triples, and per-query annotations, plus the topic pool when one exists.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub queries: Vec<(String, Vec<String>)>,
    pub documents: Vec<(String, Vec<String>)>,
    pub qrels: Qrels,
    /// `(query id, positive doc id, negative doc id)`.
    pub triples: Vec<(String, String, String)>,
    pub records: Vec<QueryRecord>,
    pub topic_pool: Vec<Vec<String>>,
}

impl SyntheticDataset {
    /// Union of all topic-pool tokens.
    pub fn topic_vocabulary(&self) -> BTreeSet<String> {
        self.topic_pool.iter().flatten().cloned().collect()
    }
}

fn token_name(i: usize) -> String {
    format!("t{i:04}")
}

/// True if `needle` occurs contiguously in `hay`.
fn contains_seq(hay: &[String], needle: &[String]) -> bool {
    count_seq(hay, needle) > 0
}

fn count_seq(hay: &[String], needle: &[String]) -> usize {
    if needle.is_empty() || hay.len() < needle.len() {
        return 0;
    }
    hay.windows(needle.len()).filter(|w| *w == needle).count()
}

fn sample_tokens(n: usize, vocab_size: usize, rng: &mut Rng) -> Vec<String> {
    (0..n).map(|_| token_name(rng.below(vocab_size))).collect()
}

const MAX_REJECTIONS: usize = 1_000;

/// Topic-match benchmark. The relevant document contains its query's topic
/// sequence contiguously exactly once at a uniform position; irrelevant
/// documents carry the same topic tokens at scattered non-adjacent
/// positions, so per-token counts are balanced and only the contiguous
/// order marks relevance. No document contains any other pool sequence,
/// all other tokens are uniform over the vocabulary, and queries are
/// disjoint from their topics, so query terms occur at the same rate in
/// relevant and irrelevant documents.
pub fn gen_topic_match(config: &SynthConfig) -> SyntheticDataset {
    assert_eq!(config.n_relevant, 1, "one graded-relevant document per query");
    assert!(config.topic_len.0 >= 1 && config.topic_len.0 <= config.topic_len.1);
    assert!(config.topic_len.1 <= config.doc_len.0, "topic must fit the shortest document");
    assert!(config.topic_pool >= 1);
    let mut master = Rng::from_seed(config.seed);

    // Global pool of distinct topic sequences.
    let mut pool_rng = master.split();
    let mut topic_pool: Vec<Vec<String>> = Vec::with_capacity(config.topic_pool);
    while topic_pool.len() < config.topic_pool {
        let len = pool_rng.range_inclusive(config.topic_len.0, config.topic_len.1);
        let mut seq = sample_tokens(len, config.vocab_size, &mut pool_rng);
        seq.dedup();
        if seq.len() == len && !topic_pool.contains(&seq) {
            topic_pool.push(seq);
        }
    }

    let mut data = SyntheticDataset {
        queries: Vec::with_capacity(config.n_queries),
        documents: Vec::new(),
        qrels: Qrels::new(),
        triples: Vec::new(),
        records: Vec::new(),
        topic_pool: topic_pool.clone(),
    };

    for qi in 0..config.n_queries {
        let mut rng = master.split();
        let query_id = format!("q{qi:05}");

        // Query disjoint from its topic so the topic task leaks no
        // query-term density signal.
        let (query, topic_idx) = loop {
            let qlen = rng.range_inclusive(config.query_len.0, config.query_len.1);
            let query = sample_tokens(qlen, config.vocab_size, &mut rng);
            let topic_idx = rng.below(topic_pool.len());
            let disjoint = topic_pool[topic_idx].iter().all(|t| !query.contains(t));
            if disjoint {
                break (query, topic_idx);
            }
        };
        let topic = &topic_pool[topic_idx];

        // Relevant document: plant the topic once, reject accidental
        // occurrences of any pool sequence.
        let position;
        let relevant = loop {
            let len = rng.range_inclusive(config.doc_len.0, config.doc_len.1);
            let mut doc = sample_tokens(len, config.vocab_size, &mut rng);
            let pos = rng.below(len - topic.len() + 1);
            doc[pos..pos + topic.len()].clone_from_slice(topic);
            let clean = count_seq(&doc, topic) == 1
                && topic_pool
                    .iter()
                    .enumerate()
                    .all(|(i, other)| i == topic_idx || !contains_seq(&doc, other));
            if clean {
                position = pos;
                break doc;
            }
        };

        // Irrelevant documents carry the same topic tokens scattered at
        // pairwise non-adjacent positions, so token counts match the
        // relevant document and only the contiguous order separates them.
        // No pool sequence may appear anywhere.
        let mut irrelevant = Vec::with_capacity(config.n_irrelevant);
        while irrelevant.len() < config.n_irrelevant {
            let mut attempts = 0;
            let doc = loop {
                let len = rng.range_inclusive(config.doc_len.0, config.doc_len.1);
                let mut doc = sample_tokens(len, config.vocab_size, &mut rng);
                let mut spots: Vec<usize> = (0..len).collect();
                rng.shuffle(&mut spots);
                let mut chosen: Vec<usize> = Vec::with_capacity(topic.len());
                for &p in &spots {
                    if chosen.iter().all(|&c| p.abs_diff(c) > 1) {
                        chosen.push(p);
                        if chosen.len() == topic.len() {
                            break;
                        }
                    }
                }
                let mut shuffled = topic.clone();
                rng.shuffle(&mut shuffled);
                for (&p, t) in chosen.iter().zip(&shuffled) {
                    doc[p] = t.clone();
                }
                if chosen.len() == topic.len()
                    && topic_pool.iter().all(|t| !contains_seq(&doc, t))
                {
                    break doc;
                }
                attempts += 1;
                assert!(attempts < MAX_REJECTIONS, "rejection sampling diverged");
            };
            irrelevant.push(doc);
        }

        let relevant_doc_id =
            emit_query(&mut data, &query_id, query, relevant, irrelevant, &mut rng);
        data.records.push(QueryRecord {
            query_id,
            relevant_doc_id,
            annotation: Annotation::Topic { sequence: topic.clone(), position },
        });
    }
    data
}

/// Density-match benchmark. Background tokens exclude the query's terms;
/// the relevant document gets `density_relevant * len` planted query-term
/// occurrences at uniform positions and each irrelevant document
/// `density_irrelevant * len`, so the density contrast is exact. No topic
/// pool exists.
pub fn gen_density_match(config: &SynthConfig) -> SyntheticDataset {
    assert_eq!(config.n_relevant, 1, "one graded-relevant document per query");
    assert!(config.density_relevant > config.density_irrelevant);
    assert!(config.density_relevant <= 0.5);
    let mut master = Rng::from_seed(config.seed);
    // Keep stream layout aligned with the topic generator.
    let _ = master.split();

    let mut data = SyntheticDataset {
        queries: Vec::with_capacity(config.n_queries),
        documents: Vec::new(),
        qrels: Qrels::new(),
        triples: Vec::new(),
        records: Vec::new(),
        topic_pool: Vec::new(),
    };

    for qi in 0..config.n_queries {
        let mut rng = master.split();
        let query_id = format!("q{qi:05}");
        let qlen = rng.range_inclusive(config.query_len.0, config.query_len.1);
        let query = sample_tokens(qlen, config.vocab_size, &mut rng);
        let query_set: BTreeSet<&String> = query.iter().collect();

        // Planted counts scale with each document's own length, so the
        // density contrast is exact for every pair of documents.
        let plant = |density: f64, rng: &mut Rng| -> (Vec<String>, Vec<usize>) {
            let len = rng.range_inclusive(config.doc_len.0, config.doc_len.1);
            let count = ((density * len as f64 + 0.5) as usize).max(1).min(len);
            let mut doc = Vec::with_capacity(len);
            // Background avoids query terms so planted counts are exact.
            while doc.len() < len {
                let t = token_name(rng.below(config.vocab_size));
                if !query_set.contains(&t) {
                    doc.push(t);
                }
            }
            let mut positions: Vec<usize> = (0..len).collect();
            rng.shuffle(&mut positions);
            positions.truncate(count);
            positions.sort_unstable();
            for &p in &positions {
                doc[p] = query[rng.below(query.len())].clone();
            }
            (doc, positions)
        };

        let (relevant, relevant_positions) = plant(config.density_relevant, &mut rng);
        let mut irrelevant = Vec::with_capacity(config.n_irrelevant);
        let mut irrelevant_counts = Vec::with_capacity(config.n_irrelevant);
        for _ in 0..config.n_irrelevant {
            let (doc, pos) = plant(config.density_irrelevant, &mut rng);
            irrelevant_counts.push(pos.len());
            irrelevant.push(doc);
        }

        let relevant_count = relevant_positions.len();
        let relevant_doc_id =
            emit_query(&mut data, &query_id, query, relevant, irrelevant, &mut rng);
        data.records.push(QueryRecord {
            query_id,
            relevant_doc_id,
            annotation: Annotation::Density {
                relevant_count,
                irrelevant_counts,
                relevant_positions,
            },
        });
    }
    data
}

/// Registers one query's documents under shuffled doc-id slots (so the
/// relevant document's id carries no positional information), fills qrels
/// and triples, and returns the relevant doc id.
fn emit_query(
    data: &mut SyntheticDataset,
    query_id: &str,
    query: Vec<String>,
    relevant: Vec<String>,
    irrelevant: Vec<Vec<String>>,
    rng: &mut Rng,
) -> String {
    let n_docs = 1 + irrelevant.len();
    let mut slots: Vec<usize> = (0..n_docs).collect();
    rng.shuffle(&mut slots);
    let doc_id = |slot: usize| format!("{query_id}-d{slot}");

    let relevant_doc_id = doc_id(slots[0]);
    data.qrels.insert(query_id, &relevant_doc_id, 1);
    let mut docs: Vec<(usize, Vec<String>)> = Vec::with_capacity(n_docs);
    docs.push((slots[0], relevant));
    for (k, doc) in irrelevant.into_iter().enumerate() {
        let id = doc_id(slots[k + 1]);
        data.qrels.insert(query_id, &id, 0);
        data.triples.push((String::from(query_id), relevant_doc_id.clone(), id));
        docs.push((slots[k + 1], doc));
    }
    // Emit documents in slot order so output files are stable.
    docs.sort_by_key(|(slot, _)| *slot);
    for (slot, doc) in docs {
        data.documents.push((doc_id(slot), doc));
    }
    data.queries.push((String::from(query_id), query));
    relevant_doc_id
}

/// Plain uniform corpus over the synthetic vocabulary, used as probe base
/// material.
pub fn uniform_corpus(
    n_docs: usize,
    vocab_size: usize,
    doc_len: (usize, usize),
    seed: u64,
) -> Vec<(String, Vec<String>)> {
    let mut rng = Rng::from_seed(seed);
    (0..n_docs)
        .map(|i| {
            let len = rng.range_inclusive(doc_len.0, doc_len.1);
            (format!("d{i:05}"), sample_tokens(len, vocab_size, &mut rng))
        })
        .collect()
}
