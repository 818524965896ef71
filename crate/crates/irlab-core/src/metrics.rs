//! Ranking-quality measures: precision at k, NDCG at k, and (mean) average
//! precision, plus a per-query evaluation table.
//!
//! Conventions, fixed here so every number is reproducible:
//! * ranked lists sort by score descending with ties broken by doc id
//!   ascending;
//! * P@k divides by `k` even when fewer than `k` documents were retrieved;
//! * the NDCG gain is `2^grade - 1` with discount `log2(rank + 1)`, and the
//!   ideal ordering is taken over all judged documents of the query;
//! * a query whose ideal DCG is zero scores NDCG 0, and a query with no
//!   relevant documents scores AP 0.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::float;
use crate::text::Qrels;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricsError {
    DuplicateDoc { query_id: String, doc_id: String },
    NonFiniteScore { query_id: String, doc_id: String },
    EmptyRun,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::DuplicateDoc { query_id, doc_id } => {
                write!(f, "duplicate doc {doc_id:?} in ranking for query {query_id:?}")
            }
            MetricsError::NonFiniteScore { query_id, doc_id } => {
                write!(f, "non-finite score for ({query_id:?}, {doc_id:?})")
            }
            MetricsError::EmptyRun => write!(f, "run contains no queries"),
        }
    }
}

/// One query's ranking: `(doc id, score)` sorted by score descending, ties
/// by doc id ascending. Construction validates the invariants.
#[derive(Debug, Clone)]
pub struct RankedList {
    pub query_id: String,
    entries: Vec<(String, f64)>,
}

impl RankedList {
    pub fn from_scores(
        query_id: String,
        mut entries: Vec<(String, f64)>,
    ) -> Result<Self, MetricsError> {
        for (doc_id, score) in &entries {
            if !score.is_finite() {
                return Err(MetricsError::NonFiniteScore {
                    query_id,
                    doc_id: doc_id.clone(),
                });
            }
        }
        entries.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("scores are finite")
                .then_with(|| a.0.cmp(&b.0))
        });
        let mut ids: Vec<&str> = entries.iter().map(|(d, _)| d.as_str()).collect();
        ids.sort_unstable();
        for pair in ids.windows(2) {
            if pair[0] == pair[1] {
                return Err(MetricsError::DuplicateDoc {
                    query_id,
                    doc_id: String::from(pair[0]),
                });
            }
        }
        Ok(RankedList { query_id, entries })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(d, _)| d.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn gain(grade: u32) -> f64 {
    ((1u64 << grade.min(62)) - 1) as f64
}

/// Fraction of the top `k` ranks holding a relevant document (grade > 0).
pub fn precision_at_k(ranked: &RankedList, qrels: &Qrels, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let hits = ranked
        .entries
        .iter()
        .take(k)
        .filter(|(doc_id, _)| qrels.grade(&ranked.query_id, doc_id) > 0)
        .count();
    hits as f64 / k as f64
}

/// NDCG at `k` with exponential gain, against the ideal ordering of all
/// judged documents for the query.
pub fn ndcg_at_k(ranked: &RankedList, qrels: &Qrels, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let mut dcg = 0.0;
    for (i, (doc_id, _)) in ranked.entries.iter().take(k).enumerate() {
        let g = qrels.grade(&ranked.query_id, doc_id);
        if g > 0 {
            dcg += gain(g) / float::log2(i as f64 + 2.0);
        }
    }

    let mut ideal: Vec<u32> = qrels
        .judged(&ranked.query_id)
        .map(|docs| docs.values().copied().filter(|&g| g > 0).collect())
        .unwrap_or_default();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let mut idcg = 0.0;
    for (i, &g) in ideal.iter().take(k).enumerate() {
        idcg += gain(g) / float::log2(i as f64 + 2.0);
    }

    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Average precision: mean over the query's relevant documents of the
/// precision at their rank; relevant documents missing from the ranking
/// contribute 0.
pub fn average_precision(ranked: &RankedList, qrels: &Qrels) -> f64 {
    let n_relevant = qrels
        .judged(&ranked.query_id)
        .map(|docs| docs.values().filter(|&&g| g > 0).count())
        .unwrap_or(0);
    if n_relevant == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, (doc_id, _)) in ranked.entries.iter().enumerate() {
        if qrels.grade(&ranked.query_id, doc_id) > 0 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / n_relevant as f64
}

/// Mean average precision over a set of rankings.
pub fn mean_average_precision(run: &[RankedList], qrels: &Qrels) -> f64 {
    if run.is_empty() {
        return 0.0;
    }
    run.iter().map(|r| average_precision(r, qrels)).sum::<f64>() / run.len() as f64
}

/// Per-query metric table plus means. Metric order: `ndcg@c` for each
/// cutoff, then `p@c` for each cutoff, then `ap`.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub metric_names: Vec<String>,
    pub rows: Vec<QueryRow>,
    pub means: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QueryRow {
    pub query_id: String,
    /// True when the query has no entry in the qrels; its metrics were
    /// computed against all-zero grades.
    pub unjudged: bool,
    pub values: Vec<f64>,
}

/// Evaluates a run against judgments at the given cutoffs. Queries absent
/// from the qrels are scored with all-zero grades and flagged.
pub fn evaluate_run(
    run: &[RankedList],
    qrels: &Qrels,
    cutoffs: &[usize],
) -> Result<EvalReport, MetricsError> {
    if run.is_empty() {
        return Err(MetricsError::EmptyRun);
    }
    let mut metric_names = Vec::new();
    for &c in cutoffs {
        metric_names.push(alloc::format!("ndcg@{c}"));
    }
    for &c in cutoffs {
        metric_names.push(alloc::format!("p@{c}"));
    }
    metric_names.push(String::from("ap"));

    let mut rows = Vec::with_capacity(run.len());
    let mut sums = alloc::vec![0.0; metric_names.len()];
    for ranked in run {
        let mut values = Vec::with_capacity(metric_names.len());
        for &c in cutoffs {
            values.push(ndcg_at_k(ranked, qrels, c));
        }
        for &c in cutoffs {
            values.push(precision_at_k(ranked, qrels, c));
        }
        values.push(average_precision(ranked, qrels));
        for (s, v) in sums.iter_mut().zip(&values) {
            *s += v;
        }
        rows.push(QueryRow {
            query_id: ranked.query_id.clone(),
            unjudged: !qrels.contains_query(&ranked.query_id),
            values,
        });
    }
    let n = rows.len() as f64;
    let means = sums.into_iter().map(|s| s / n).collect();
    Ok(EvalReport { metric_names, rows, means })
}

/// Convenience lookup on the means of an [`EvalReport`].
impl EvalReport {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metric_names
            .iter()
            .position(|m| m == metric)
            .map(|i| self.means[i])
    }
}

/// Groups `(query id, doc id, score)` triples into ranked lists, one per
/// query, in ascending query-id order.
pub fn rankings_from_triples(
    scores: &[(String, String, f64)],
) -> Result<Vec<RankedList>, MetricsError> {
    let mut grouped: BTreeMap<&str, Vec<(String, f64)>> = BTreeMap::new();
    for (qid, did, s) in scores {
        grouped.entry(qid).or_default().push((did.clone(), *s));
    }
    grouped
        .into_iter()
        .map(|(qid, entries)| RankedList::from_scores(String::from(qid), entries))
        .collect()
}
