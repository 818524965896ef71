//! Text ingestion: tokenization, vocabulary construction, and the document,
//! query, and judgment types shared by every scorer and diagnostic.
//!
//! The analysis chain is deliberately plain: whitespace tokenization,
//! lowercasing, an optional embedded stop list (applied to queries only in
//! the default setup), and a small plural-folding stemmer. All of it is
//! deterministic and idempotent, so re-tokenizing tokenized output is a
//! no-op.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Reserved id for out-of-vocabulary tokens. Always present, always 0.
pub const OOV_ID: u32 = 0;

/// Display string for the reserved OOV slot.
pub const OOV_TOKEN: &str = "<oov>";

/// Embedded English stop list, applied to queries by default.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an",
    "and", "any", "are", "as", "at", "be", "because", "been", "before",
    "being", "below", "between", "both", "but", "by", "can", "did", "do",
    "does", "doing", "down", "during", "each", "few", "for", "from",
    "further", "had", "has", "have", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is",
    "it", "its", "itself", "just", "me", "more", "most", "my", "myself",
    "no", "nor", "not", "now", "of", "off", "on", "once", "only", "or",
    "other", "our", "ours", "ourselves", "out", "over", "own", "same",
    "she", "should", "so", "some", "such", "than", "that", "the", "their",
    "theirs", "them", "themselves", "then", "there", "these", "they",
    "this", "those", "through", "to", "too", "under", "until", "up", "very",
    "was", "we", "were", "what", "when", "where", "which", "while", "who",
    "whom", "why", "will", "with", "you", "your", "yours", "yourself",
    "yourselves",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TextError {
    /// Vocabulary construction was handed zero documents.
    EmptyCorpus,
    /// A document had no tokens left after ingestion filters.
    EmptyDocument { id: String },
}

impl fmt::Display for TextError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TextError::EmptyCorpus => write!(f, "cannot build a vocabulary from an empty corpus"),
            TextError::EmptyDocument { id } => {
                write!(f, "document {id:?} has no tokens after ingestion filters")
            }
        }
    }
}

/// How raw text becomes tokens.
#[derive(Debug, Clone)]
pub struct TokenizeConfig {
    pub lowercase: bool,
    /// Tokens dropped after lowercasing; `None` disables stopword removal.
    pub stopwords: Option<BTreeSet<String>>,
    /// Plural-folding suffix stripper on/off.
    pub stem: bool,
}

impl TokenizeConfig {
    /// Document-side defaults: lowercase and stem, keep stopwords.
    pub fn documents() -> Self {
        TokenizeConfig { lowercase: true, stopwords: None, stem: true }
    }

    /// Query-side defaults: lowercase, stem, and drop embedded stopwords.
    pub fn queries() -> Self {
        TokenizeConfig {
            lowercase: true,
            stopwords: Some(STOPWORDS.iter().map(|s| (*s).to_owned()).collect()),
            stem: true,
        }
    }

    /// Whitespace splitting only.
    pub fn raw() -> Self {
        TokenizeConfig { lowercase: false, stopwords: None, stem: false }
    }
}

/// Folds plural suffixes: `sses -> ss`, `ies -> y`, `ss` kept, trailing `s`
/// dropped. Rules fire only when at least three characters remain, and the
/// output is a fixed point of the rules, so stemming is idempotent.
pub fn stem(token: &str) -> String {
    let t = token;
    if let Some(base) = t.strip_suffix("sses") {
        if !base.is_empty() {
            let mut s = String::with_capacity(base.len() + 2);
            s.push_str(base);
            s.push_str("ss");
            return s;
        }
    }
    if let Some(base) = t.strip_suffix("ies") {
        if !base.is_empty() {
            let mut s = String::with_capacity(base.len() + 1);
            s.push_str(base);
            s.push('y');
            return s;
        }
    }
    if t.ends_with("ss") {
        return t.to_owned();
    }
    if let Some(base) = t.strip_suffix('s') {
        if base.len() >= 3 {
            return base.to_owned();
        }
    }
    t.to_owned()
}

/// Whitespace tokenization with optional lowercasing, stopword removal, and
/// stemming. Deterministic; may return an empty list (all-stopword input).
///
/// The stop list is checked against both the surface form and the stemmed
/// form, so tokens whose stem lands on a stopword are dropped too and the
/// whole chain is idempotent on its own output.
pub fn tokenize(text: &str, config: &TokenizeConfig) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let token = if config.lowercase { raw.to_lowercase() } else { raw.to_owned() };
        if let Some(stops) = &config.stopwords {
            if stops.contains(token.as_str()) {
                continue;
            }
        }
        let token = if config.stem { stem(&token) } else { token };
        if let Some(stops) = &config.stopwords {
            if stops.contains(token.as_str()) {
                continue;
            }
        }
        out.push(token);
    }
    out
}

/// A tokenized document. `raw_length` is the token count before any
/// truncation, which truncating wrappers preserve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<u32>,
    pub raw_length: usize,
}

impl Document {
    pub fn new(id: String, tokens: Vec<u32>) -> Result<Self, TextError> {
        if tokens.is_empty() {
            return Err(TextError::EmptyDocument { id });
        }
        let raw_length = tokens.len();
        Ok(Document { id, tokens, raw_length })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A tokenized query over the same vocabulary as the documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub tokens: Vec<u32>,
}

impl Query {
    pub fn new(id: String, tokens: Vec<u32>) -> Self {
        Query { id, tokens }
    }
}

/// Token table with collection statistics.
///
/// Ids are dense in `[0, size)` with id 0 reserved for OOV. Kept tokens are
/// assigned ids in lexicographic order, so construction is deterministic.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: BTreeMap<String, u32>,
    id_to_token: Vec<String>,
    /// Documents containing each id at least once.
    df: Vec<u64>,
    /// Total occurrences of each id across the collection.
    cf: Vec<u64>,
    /// Number of documents.
    n_docs: u64,
    /// Total token count of the collection.
    total_tokens: u64,
}

impl Vocabulary {
    /// Builds the table from pre-tokenized documents. Tokens whose collection
    /// frequency is below `min_count` fold into the OOV id.
    pub fn build(docs: &[Vec<String>], min_count: u64) -> Result<Self, TextError> {
        assert!(min_count >= 1, "min_count must be at least 1");
        if docs.is_empty() {
            return Err(TextError::EmptyCorpus);
        }

        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for doc in docs {
            for token in doc {
                *counts.entry(token.as_str()).or_insert(0) += 1;
            }
        }

        let mut token_to_id = BTreeMap::new();
        let mut id_to_token = Vec::with_capacity(counts.len() + 1);
        id_to_token.push(OOV_TOKEN.to_owned());
        for (token, &count) in &counts {
            if count >= min_count {
                let id = id_to_token.len() as u32;
                token_to_id.insert((*token).to_owned(), id);
                id_to_token.push((*token).to_owned());
            }
        }

        let size = id_to_token.len();
        let mut df = alloc::vec![0u64; size];
        let mut cf = alloc::vec![0u64; size];
        let mut total_tokens = 0u64;
        let mut seen: BTreeSet<u32> = BTreeSet::new();
        for doc in docs {
            seen.clear();
            for token in doc {
                let id = token_to_id.get(token.as_str()).copied().unwrap_or(OOV_ID);
                cf[id as usize] += 1;
                total_tokens += 1;
                seen.insert(id);
            }
            for &id in &seen {
                df[id as usize] += 1;
            }
        }

        Ok(Vocabulary {
            token_to_id,
            id_to_token,
            df,
            cf,
            n_docs: docs.len() as u64,
            total_tokens,
        })
    }

    /// Rebuilds a vocabulary from a saved id-ordered token listing (index 0
    /// is the OOV slot) and recomputes the statistics over `docs`.
    pub fn from_listing(listing: &[String], docs: &[Vec<String>]) -> Result<Self, TextError> {
        assert!(!listing.is_empty(), "listing must include the OOV slot");
        if docs.is_empty() {
            return Err(TextError::EmptyCorpus);
        }
        let id_to_token: Vec<String> = listing.to_vec();
        let mut token_to_id = BTreeMap::new();
        for (id, token) in id_to_token.iter().enumerate().skip(1) {
            token_to_id.insert(token.clone(), id as u32);
        }
        let size = id_to_token.len();
        let mut df = alloc::vec![0u64; size];
        let mut cf = alloc::vec![0u64; size];
        let mut total_tokens = 0u64;
        let mut seen: BTreeSet<u32> = BTreeSet::new();
        for doc in docs {
            seen.clear();
            for token in doc {
                let id = token_to_id.get(token.as_str()).copied().unwrap_or(OOV_ID);
                cf[id as usize] += 1;
                total_tokens += 1;
                seen.insert(id);
            }
            for &id in &seen {
                df[id as usize] += 1;
            }
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
            df,
            cf,
            n_docs: docs.len() as u64,
            total_tokens,
        })
    }

    /// Id-ordered token listing, OOV slot first.
    pub fn listing(&self) -> &[String] {
        &self.id_to_token
    }

    /// Number of ids, including the reserved OOV slot.
    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(OOV_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    pub fn df(&self, id: u32) -> u64 {
        self.df[id as usize]
    }

    pub fn cf(&self, id: u32) -> u64 {
        self.cf[id as usize]
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Maps token strings to ids, OOV for unknowns.
    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Ids of tokens that occur in the collection (excludes OOV).
    pub fn known_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (1..self.size() as u32).filter(|&id| self.cf[id as usize] > 0)
    }
}

/// Relevance judgments: `(query id, doc id) -> grade`. Absent pairs grade 0.
#[derive(Debug, Clone, Default)]
pub struct Qrels {
    grades: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Qrels::default()
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) {
        self.grades
            .entry(query_id.to_owned())
            .or_default()
            .insert(doc_id.to_owned(), grade);
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.grades
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.grades.contains_key(query_id)
    }

    /// Judged docs and grades for one query, if any.
    pub fn judged(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.grades.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.grades.iter().flat_map(|(qid, docs)| {
            docs.iter().map(move |(did, &g)| (qid.as_str(), did.as_str(), g))
        })
    }

    pub fn len(&self) -> usize {
        self.grades.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.grades.is_empty()
    }
}

/// First `max_len` tokens; `raw_length` keeps the pre-truncation count.
pub fn truncate(doc: &Document, max_len: usize) -> Document {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mut tokens = doc.tokens.clone();
    tokens.truncate(max_len);
    Document { id: doc.id.clone(), tokens, raw_length: doc.raw_length }
}

/// Splits into windows of at most `passage_len` tokens starting at every
/// multiple of `stride` below the document length. The final window may be
/// short; together the windows cover every token.
pub fn split_passages(doc: &Document, passage_len: usize, stride: usize) -> Vec<Document> {
    assert!(passage_len >= 1, "passage_len must be at least 1");
    assert!(
        (1..=passage_len).contains(&stride),
        "stride must be in 1..=passage_len"
    );
    let len = doc.tokens.len();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut index = 0usize;
    while start < len {
        let end = usize::min(start + passage_len, len);
        let mut id = doc.id.clone();
        id.push_str(":p");
        push_usize(&mut id, index);
        out.push(Document {
            id,
            tokens: doc.tokens[start..end].to_vec(),
            raw_length: end - start,
        });
        start += stride;
        index += 1;
    }
    out
}

fn push_usize(s: &mut String, value: usize) {
    use core::fmt::Write;
    let _ = write!(s, "{value}");
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::{vec, format};

    fn strings(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn tokenize_lowercases() {
        let got = tokenize("Tooth Fairy museum", &TokenizeConfig::documents());
        assert_eq!(got, strings(&["tooth", "fairy", "museum"]));
    }

    #[test]
    fn stopword_removal_can_empty_the_output() {
        let got = tokenize("the of", &TokenizeConfig::queries());
        assert!(got.is_empty());
    }

    #[test]
    fn stemmer_folds_plural_forms_together() {
        // By the rules: "fairies" -> ies->y -> "fairy"; "fairy" unchanged.
        assert_eq!(stem("fairies"), "fairy");
        assert_eq!(stem("fairy"), "fairy");
        assert_eq!(stem("classes"), "class");
        assert_eq!(stem("class"), "class");
        assert_eq!(stem("cats"), "cat");
        // Too short to strip.
        assert_eq!(stem("gas"), "gas");
    }

    #[test]
    fn tokenize_is_idempotent() {
        let config = TokenizeConfig::queries();
        let once = tokenize("The Fairies visited THREE museums yesterday", &config);
        let rejoined = once.join(" ");
        let twice = tokenize(&rejoined, &config);
        assert_eq!(once, twice);
    }

    #[test]
    fn vocabulary_counts_by_hand() {
        // Two docs: "a b" and "a". Hand counts: df(a)=2, cf(a)=2, N=2, |C|=3.
        let docs = vec![strings(&["a", "b"]), strings(&["a"])];
        let vocab = Vocabulary::build(&docs, 1).unwrap();
        assert_eq!(vocab.size(), 3); // OOV + a + b
        let a = vocab.id("a");
        assert_ne!(a, OOV_ID);
        assert_eq!(vocab.df(a), 2);
        assert_eq!(vocab.cf(a), 2);
        assert_eq!(vocab.n_docs(), 2);
        assert_eq!(vocab.total_tokens(), 3);
    }

    #[test]
    fn min_count_folds_rare_tokens_into_oov() {
        let docs = vec![strings(&["a", "b"]), strings(&["a"])];
        let vocab = Vocabulary::build(&docs, 2).unwrap();
        assert_eq!(vocab.size(), 2); // OOV + a
        assert_eq!(vocab.id("b"), OOV_ID);
        assert_eq!(vocab.cf(OOV_ID), 1);
        assert_eq!(vocab.df(OOV_ID), 1);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let err = Vocabulary::build(&[], 1).unwrap_err();
        assert_eq!(err, TextError::EmptyCorpus);
    }

    #[test]
    fn truncate_keeps_prefix_and_raw_length() {
        let doc = Document::new("d".into(), (0..50).collect()).unwrap();
        let long = Document { raw_length: 5000, ..doc.clone() };
        let cut = truncate(&long, 10);
        assert_eq!(cut.tokens, (0..10).collect::<Vec<u32>>());
        assert_eq!(cut.raw_length, 5000);

        let unchanged = truncate(&doc, 500);
        assert_eq!(unchanged.tokens, doc.tokens);

        let single = truncate(&doc, 1);
        assert_eq!(single.tokens, vec![0]);
    }

    #[test]
    fn split_passages_non_overlapping() {
        let doc = Document::new("d".into(), (0..10).collect()).unwrap();
        let parts = split_passages(&doc, 4, 4);
        let sizes: Vec<usize> = parts.iter().map(|p| p.tokens.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn split_passages_strided_starts_enumerated_by_hand() {
        // 10 tokens, window 4, stride 2: starts 0,2,4,6,8.
        let doc = Document::new("d".into(), (0..10).collect()).unwrap();
        let parts = split_passages(&doc, 4, 2);
        let starts: Vec<u32> = parts.iter().map(|p| p.tokens[0]).collect();
        assert_eq!(starts, vec![0, 2, 4, 6, 8]);
        for p in &parts {
            assert!(p.tokens.len() <= 4);
        }
    }

    #[test]
    fn short_doc_yields_single_passage() {
        let doc = Document::new("d".into(), (0..3).collect()).unwrap();
        let parts = split_passages(&doc, 4, 4);
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].tokens, doc.tokens);
    }

    #[test]
    fn contiguous_split_reconstructs_document() {
        let doc = Document::new("d".into(), (0..23).collect()).unwrap();
        let parts = split_passages(&doc, 5, 5);
        let rebuilt: Vec<u32> = parts.iter().flat_map(|p| p.tokens.iter().copied()).collect();
        assert_eq!(rebuilt, doc.tokens);
    }

    #[test]
    fn qrels_default_grade_is_zero() {
        let mut qrels = Qrels::new();
        qrels.insert("q1", "d1", 2);
        assert_eq!(qrels.grade("q1", "d1"), 2);
        assert_eq!(qrels.grade("q1", "dx"), 0);
        assert_eq!(qrels.grade("qx", "d1"), 0);
    }

    #[test]
    fn vocabulary_stats_are_consistent() {
        let docs = vec![
            strings(&["x", "y", "x", "z"]),
            strings(&["y", "y", "q"]),
            strings(&["x"]),
        ];
        let vocab = Vocabulary::build(&docs, 1).unwrap();
        let total: u64 = (0..vocab.size() as u32).map(|id| vocab.cf(id)).sum();
        assert_eq!(total, vocab.total_tokens());
        for id in 0..vocab.size() as u32 {
            // df <= min(N, cf)
            assert!(vocab.df(id) <= vocab.n_docs());
            assert!(vocab.df(id) <= vocab.cf(id));
        }
        let _ = format!("{vocab:?}");
    }
}
