//! Shared wiring between file formats and the core library: loading a
//! collection, encoding it against a vocabulary, and assembling scorers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use irlab_core::axioms::{
    Bm25Scorer, LmJmScorer, MatcherScorer, PassageScorer, Scorer, TfidfScorer, TruncateScorer,
};
use irlab_core::classic::{Bm25Params, CollectionStats, LmParams};
use irlab_core::text::{tokenize, Document, Query, TokenizeConfig, Vocabulary};

use crate::checkpoint::{load_model, AnyModel};
use crate::formats;

/// A corpus and optional topics, tokenized and encoded against one
/// vocabulary.
pub struct Collection {
    pub vocab: Vocabulary,
    pub stats: CollectionStats,
    pub documents: Vec<Document>,
    pub doc_index: BTreeMap<String, usize>,
    pub queries: Vec<Query>,
}

impl Collection {
    pub fn document(&self, id: &str) -> Option<&Document> {
        self.doc_index.get(id).map(|&i| &self.documents[i])
    }
}

/// Where the vocabulary comes from.
pub enum VocabSource {
    /// Build from the corpus at the given minimum collection frequency.
    Build { min_count: u64 },
    /// A saved id-ordered listing (a trained model's `vocab.txt`).
    Listing(Vec<String>),
}

/// Reads, tokenizes, and encodes a corpus (and topics when given).
/// Documents use the document-side analysis chain; topics the query-side
/// one (stopwords removed there only).
pub fn load_collection(
    corpus_path: &Path,
    topics_path: Option<&Path>,
    vocab: VocabSource,
) -> Result<Collection> {
    let raw_docs = formats::parse_corpus(corpus_path)?;
    if raw_docs.is_empty() {
        bail!("corpus {} is empty", corpus_path.display());
    }
    let doc_config = TokenizeConfig::documents();
    let token_docs: Vec<Vec<String>> =
        raw_docs.iter().map(|(_, text)| tokenize(text, &doc_config)).collect();

    let vocab = match vocab {
        VocabSource::Build { min_count } => Vocabulary::build(&token_docs, min_count)
            .map_err(|e| anyhow!("building vocabulary: {e}"))?,
        VocabSource::Listing(listing) => Vocabulary::from_listing(&listing, &token_docs)
            .map_err(|e| anyhow!("applying vocabulary listing: {e}"))?,
    };
    let stats = CollectionStats::from_vocabulary(&vocab);

    let mut documents = Vec::with_capacity(raw_docs.len());
    let mut doc_index = BTreeMap::new();
    for ((id, _), tokens) in raw_docs.iter().zip(&token_docs) {
        let doc = Document::new(id.clone(), vocab.encode(tokens))
            .map_err(|e| anyhow!("document {id:?}: {e}"))?;
        doc_index.insert(id.clone(), documents.len());
        documents.push(doc);
    }

    let mut queries = Vec::new();
    if let Some(path) = topics_path {
        let query_config = TokenizeConfig::queries();
        for (id, text) in formats::parse_topics(path)? {
            let tokens = vocab.encode(&tokenize(&text, &query_config));
            if tokens.is_empty() {
                bail!("topic {id:?} has no tokens after query analysis");
            }
            queries.push(Query::new(id, tokens));
        }
    }

    Ok(Collection { vocab, stats, documents, doc_index, queries })
}

/// Which base scorer to build.
#[derive(Debug, Clone)]
pub enum ScorerSpec {
    Classic(String),
    ModelDir(PathBuf),
}

/// Optional wrappers, applied as `passages(truncate(base))`.
#[derive(Debug, Clone, Default)]
pub struct ScorerWrappers {
    pub truncate: Option<usize>,
    /// `(passage_len, stride, use_mean)`.
    pub passages: Option<(usize, usize, bool)>,
}

/// Builds a boxed scorer. Classical scorers take their statistics from
/// `stats`; model scorers load a saved model directory (the caller is
/// responsible for encoding inputs with that model's vocabulary).
pub fn build_scorer(
    spec: &ScorerSpec,
    stats: &CollectionStats,
    wrappers: &ScorerWrappers,
) -> Result<Box<dyn Scorer>> {
    let base: Box<dyn Scorer> = match spec {
        ScorerSpec::Classic(name) => match name.as_str() {
            "bm25" => Box::new(Bm25Scorer { stats: stats.clone(), params: Bm25Params::default() }),
            "tfidf" => Box::new(TfidfScorer { stats: stats.clone() }),
            "lm_jm" | "lmjm" => {
                Box::new(LmJmScorer { stats: stats.clone(), params: LmParams::default() })
            }
            other => bail!("unknown scorer {other:?} (expected bm25, tfidf, lm_jm)"),
        },
        ScorerSpec::ModelDir(dir) => {
            let (model, _) = load_model(dir)?;
            match model {
                AnyModel::Rep(m) => Box::new(MatcherScorer { model: m, label: "rep".to_string() }),
                AnyModel::Int(m) => Box::new(MatcherScorer { model: m, label: "int".to_string() }),
            }
        }
    };
    let truncated: Box<dyn Scorer> = match wrappers.truncate {
        Some(max_len) => Box::new(TruncateScorer::new(base, max_len)),
        None => base,
    };
    let wrapped: Box<dyn Scorer> = match wrappers.passages {
        Some((len, stride, use_mean)) => {
            Box::new(PassageScorer::new(truncated, len, stride, use_mean))
        }
        None => truncated,
    };
    Ok(wrapped)
}

/// The vocabulary a scorer spec encodes against: a model's own listing, or
/// none (build from the corpus).
pub fn scorer_vocab_source(spec: &ScorerSpec, min_count: u64) -> Result<VocabSource> {
    match spec {
        ScorerSpec::Classic(_) => Ok(VocabSource::Build { min_count }),
        ScorerSpec::ModelDir(dir) => {
            let listing = formats::parse_vocab_listing(&dir.join("vocab.txt"))
                .with_context(|| format!("model dir {}", dir.display()))?;
            Ok(VocabSource::Listing(listing))
        }
    }
}
