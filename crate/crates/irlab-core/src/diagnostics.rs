//! Analysis procedures over scorers and feature sets: ridge linear probes,
//! feature-removal robustness curves, pooling-word overlap curves, the
//! last-match-position histogram, and passage-split scoring.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::axioms::Scorer;
use crate::float;
use crate::metrics::{mean_average_precision, RankedList};
use crate::text::{split_passages, Document, Qrels, Query};

#[derive(Debug, Clone, PartialEq)]
pub enum DiagError {
    /// Least squares with no regularization hit a singular system.
    SingularSystem,
    /// A feature matrix row carried a non-finite value.
    NonFiniteFeature { row: usize, column: usize },
    EmptyInput(&'static str),
    ShapeMismatch(String),
}

impl fmt::Display for DiagError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagError::SingularSystem => {
                write!(f, "singular normal equations; use l2 > 0 or more rows")
            }
            DiagError::NonFiniteFeature { row, column } => {
                write!(f, "non-finite feature at row {row}, column {column}")
            }
            DiagError::EmptyInput(what) => write!(f, "{what} must be nonempty"),
            DiagError::ShapeMismatch(msg) => write!(f, "{msg}"),
        }
    }
}

/// Ordered `(x, y)` points with strictly increasing x.
#[derive(Debug, Clone)]
pub struct Curve {
    pub x_label: String,
    pub y_label: String,
    points: Vec<(f64, f64)>,
}

impl Curve {
    pub fn new(x_label: &str, y_label: &str, points: Vec<(f64, f64)>) -> Self {
        for pair in points.windows(2) {
            assert!(pair[0].0 < pair[1].0, "curve x values must strictly increase");
        }
        Curve { x_label: String::from(x_label), y_label: String::from(y_label), points }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn y_at_index(&self, i: usize) -> f64 {
        self.points[i].1
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Feature matrix with aligned labels and pair identities. Row order is
/// construction order; all entries are finite by construction.
#[derive(Debug, Clone, Default)]
pub struct FeatureSet {
    pub feature_names: Vec<String>,
    query_ids: Vec<String>,
    doc_ids: Vec<String>,
    grades: Vec<u32>,
    matrix: Vec<f64>,
}

impl FeatureSet {
    pub fn new(feature_names: Vec<String>) -> Self {
        FeatureSet { feature_names, ..FeatureSet::default() }
    }

    pub fn push_row(
        &mut self,
        query_id: &str,
        doc_id: &str,
        grade: u32,
        features: &[f64],
    ) -> Result<(), DiagError> {
        if features.len() != self.feature_names.len() {
            return Err(DiagError::ShapeMismatch(format!(
                "row has {} features, set has {}",
                features.len(),
                self.feature_names.len()
            )));
        }
        for (j, v) in features.iter().enumerate() {
            if !v.is_finite() {
                return Err(DiagError::NonFiniteFeature { row: self.len(), column: j });
            }
        }
        self.query_ids.push(String::from(query_id));
        self.doc_ids.push(String::from(doc_id));
        self.grades.push(grade);
        self.matrix.extend_from_slice(features);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.grades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grades.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let f = self.n_features();
        &self.matrix[i * f..(i + 1) * f]
    }

    pub fn grade(&self, i: usize) -> u32 {
        self.grades[i]
    }

    pub fn query_id(&self, i: usize) -> &str {
        &self.query_ids[i]
    }

    pub fn doc_id(&self, i: usize) -> &str {
        &self.doc_ids[i]
    }

    pub fn query_id_set(&self) -> BTreeSet<String> {
        self.query_ids.iter().cloned().collect()
    }
}

/// Ridge least squares fit with an unpenalized intercept.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearProbe {
    pub fn predict(&self, features: &[f64]) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .zip(features)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }

    /// Prediction with the listed feature indices zeroed out, weights kept.
    pub fn predict_ablated(&self, features: &[f64], removed: &[bool]) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .zip(features)
                .zip(removed)
                .filter(|(_, &r)| !r)
                .map(|((w, x), _)| w * x)
                .sum::<f64>()
    }
}

/// Minimizes `|X w - y|^2 + l2 |w|^2` (intercept unpenalized) by solving
/// the normal equations with partial-pivot elimination. With `l2 = 0` a
/// singular system is an error.
pub fn linear_probe(
    rows: &[&[f64]],
    labels: &[f64],
    l2: f64,
) -> Result<LinearProbe, DiagError> {
    if rows.is_empty() {
        return Err(DiagError::EmptyInput("feature rows"));
    }
    if rows.len() != labels.len() {
        return Err(DiagError::ShapeMismatch(format!(
            "{} rows vs {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let f = rows[0].len();
    let n = f + 1; // + intercept, last column
    let mut ata = alloc::vec![0.0; n * n];
    let mut aty = alloc::vec![0.0; n];
    for (row, &y) in rows.iter().zip(labels) {
        debug_assert_eq!(row.len(), f);
        for i in 0..f {
            for j in 0..f {
                ata[i * n + j] += row[i] * row[j];
            }
            ata[i * n + f] += row[i];
            ata[f * n + i] += row[i];
            aty[i] += row[i] * y;
        }
        ata[f * n + f] += 1.0;
        aty[f] += y;
    }
    for i in 0..f {
        ata[i * n + i] += l2;
    }
    let solution = solve(&mut ata, &mut aty, n)?;
    let mut weights = solution;
    let intercept = weights.pop().expect("intercept slot");
    Ok(LinearProbe { weights, intercept })
}

fn solve(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>, DiagError> {
    let scale = a
        .iter()
        .fold(0.0f64, |acc, v| acc.max(float::abs(*v)))
        .max(1e-30);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| {
                float::abs(a[r1 * n + col])
                    .partial_cmp(&float::abs(a[r2 * n + col]))
                    .expect("finite")
            })
            .expect("nonempty range");
        if float::abs(a[pivot_row * n + col]) < 1e-12 * scale {
            return Err(DiagError::SingularSystem);
        }
        if pivot_row != col {
            for j in 0..n {
                a.swap(col * n + j, pivot_row * n + j);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = alloc::vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for j in col + 1..n {
            acc -= a[col * n + j] * x[j];
        }
        x[col] = acc / a[col * n + col];
    }
    Ok(x)
}

/// Feature-removal robustness analysis.
#[derive(Debug, Clone)]
pub struct RobustnessResult {
    /// x = features removed (importance order), y = metric on the test
    /// split.
    pub curve: Curve,
    /// Feature indices in removal order (most important first).
    pub removal_order: Vec<usize>,
    pub probe: LinearProbe,
}

/// Fits a linear probe on the training queries, ranks features by
/// `|weight| * std(feature)`, removes them one by one (zeroing the feature,
/// keeping the fitted weights; `refit` refits instead), and measures mean
/// average precision on the test queries after each removal.
pub fn robustness_curve(
    features: &FeatureSet,
    train_queries: &BTreeSet<String>,
    l2: f64,
    refit: bool,
) -> Result<RobustnessResult, DiagError> {
    if features.is_empty() {
        return Err(DiagError::EmptyInput("feature set"));
    }
    let train_rows: Vec<usize> = (0..features.len())
        .filter(|&i| train_queries.contains(features.query_id(i)))
        .collect();
    let test_rows: Vec<usize> = (0..features.len())
        .filter(|&i| !train_queries.contains(features.query_id(i)))
        .collect();
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(DiagError::EmptyInput("train/test split"));
    }

    let x_train: Vec<&[f64]> = train_rows.iter().map(|&i| features.row(i)).collect();
    let y_train: Vec<f64> = train_rows.iter().map(|&i| features.grade(i) as f64).collect();
    let probe = linear_probe(&x_train, &y_train, l2)?;

    // Importance: |weight| times the feature's spread on the training rows;
    // weights alone are scale-dependent.
    let f = features.n_features();
    let mut importance = alloc::vec![0.0; f];
    for (j, slot) in importance.iter_mut().enumerate() {
        let mean: f64 =
            train_rows.iter().map(|&i| features.row(i)[j]).sum::<f64>() / train_rows.len() as f64;
        let var: f64 = train_rows
            .iter()
            .map(|&i| {
                let d = features.row(i)[j] - mean;
                d * d
            })
            .sum::<f64>()
            / train_rows.len() as f64;
        *slot = float::abs(probe.weights[j]) * float::sqrt(var);
    }
    let mut removal_order: Vec<usize> = (0..f).collect();
    removal_order.sort_by(|&a, &b| {
        importance[b].partial_cmp(&importance[a]).expect("finite").then(a.cmp(&b))
    });

    let qrels = qrels_from(features);
    let mut removed = alloc::vec![false; f];
    let mut points = Vec::with_capacity(f + 1);
    for step in 0..=f {
        if step > 0 {
            removed[removal_order[step - 1]] = true;
        }
        let active_probe;
        let probe_ref = if refit && step > 0 {
            let kept: Vec<usize> = (0..f).filter(|&j| !removed[j]).collect();
            if kept.is_empty() {
                active_probe = LinearProbe { weights: alloc::vec![0.0; f], intercept: 0.0 };
            } else {
                let x_sub: Vec<Vec<f64>> = train_rows
                    .iter()
                    .map(|&i| kept.iter().map(|&j| features.row(i)[j]).collect())
                    .collect();
                let x_ref: Vec<&[f64]> = x_sub.iter().map(Vec::as_slice).collect();
                let sub = linear_probe(&x_ref, &y_train, l2)?;
                let mut weights = alloc::vec![0.0; f];
                for (slot, &j) in kept.iter().enumerate() {
                    weights[j] = sub.weights[slot];
                }
                active_probe = LinearProbe { weights, intercept: sub.intercept };
            }
            &active_probe
        } else {
            &probe
        };

        let scores: Vec<(String, String, f64)> = test_rows
            .iter()
            .map(|&i| {
                (
                    String::from(features.query_id(i)),
                    String::from(features.doc_id(i)),
                    probe_ref.predict_ablated(features.row(i), &removed),
                )
            })
            .collect();
        let run = crate::metrics::rankings_from_triples(&scores)
            .map_err(|e| DiagError::ShapeMismatch(format!("{e}")))?;
        points.push((step as f64, mean_average_precision(&run, &qrels)));
    }

    Ok(RobustnessResult {
        curve: Curve::new("features_removed", "map", points),
        removal_order,
        probe,
    })
}

fn qrels_from(features: &FeatureSet) -> Qrels {
    let mut qrels = Qrels::new();
    for i in 0..features.len() {
        qrels.insert(features.query_id(i), features.doc_id(i), features.grade(i));
    }
    qrels
}

/// `y(n) = |top-n intersect reference| / n` for `n = 1..=max_n` (curve ends
/// at the ranked list's length if shorter).
pub fn overlap_curve(
    ranked_words: &[String],
    reference: &BTreeSet<String>,
    max_n: usize,
) -> Curve {
    let mut points = Vec::new();
    let mut hits = 0usize;
    for (i, word) in ranked_words.iter().take(max_n).enumerate() {
        if reference.contains(word) {
            hits += 1;
        }
        points.push(((i + 1) as f64, hits as f64 / (i + 1) as f64));
    }
    Curve::new("top_n", "overlap_ratio", points)
}

/// Last-match-position analysis over query-document pairs.
#[derive(Debug, Clone)]
pub struct PositionReport {
    /// Histogram of last-match positions; x is each bin's inclusive upper
    /// edge (1-based positions), y the pair count in the bin.
    pub histogram: Curve,
    /// Among pairs with any match, the fraction whose last match falls
    /// beyond the threshold.
    pub fraction_beyond: f64,
    pub threshold: usize,
    pub n_pairs: usize,
    /// Pairs with no query term in the document (excluded from the
    /// histogram).
    pub n_no_match: usize,
}

/// For each pair, the 1-based position of the last occurrence of any query
/// term in the untruncated document.
pub fn last_match_positions(
    pairs: &[(&Query, &Document)],
    threshold: usize,
    bin_width: usize,
) -> PositionReport {
    assert!(bin_width >= 1);
    let mut positions = Vec::new();
    let mut n_no_match = 0usize;
    for (q, d) in pairs {
        let qset: BTreeSet<u32> = q.tokens.iter().copied().collect();
        let last = d.tokens.iter().rposition(|t| qset.contains(t));
        match last {
            Some(idx) => positions.push(idx + 1),
            None => n_no_match += 1,
        }
    }
    let beyond = positions.iter().filter(|&&p| p > threshold).count();
    let fraction_beyond =
        if positions.is_empty() { 0.0 } else { beyond as f64 / positions.len() as f64 };

    let max_pos = positions.iter().copied().max().unwrap_or(0);
    let n_bins = max_pos.div_ceil(bin_width);
    let mut counts = alloc::vec![0usize; n_bins];
    for &p in &positions {
        counts[(p - 1) / bin_width] += 1;
    }
    let points = counts
        .iter()
        .enumerate()
        .map(|(b, &c)| (((b + 1) * bin_width) as f64, c as f64))
        .collect();

    PositionReport {
        histogram: Curve::new("position", "count", points),
        fraction_beyond,
        threshold,
        n_pairs: pairs.len(),
        n_no_match,
    }
}

/// Scores each passage of the document with the wrapped scorer and
/// aggregates: mean when `use_mean`, max otherwise.
pub fn passage_score(
    scorer: &dyn Scorer,
    q: &Query,
    d: &Document,
    passage_len: usize,
    stride: usize,
    use_mean: bool,
) -> Result<f64, String> {
    let passages = split_passages(d, passage_len, stride);
    debug_assert!(!passages.is_empty());
    let mut scores = Vec::with_capacity(passages.len());
    for p in &passages {
        scores.push(scorer.score(q, p)?);
    }
    if use_mean {
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    } else {
        Ok(scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Builds a ranked list per query from arbitrary scored pairs; convenience
/// for scorer evaluation.
pub fn score_pairs(
    scorer: &dyn Scorer,
    queries: &[Query],
    documents: &[Document],
    qrels: &Qrels,
) -> Result<Vec<RankedList>, String> {
    let doc_index: alloc::collections::BTreeMap<&str, &Document> =
        documents.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut scored = Vec::new();
    for q in queries {
        let Some(judged) = qrels.judged(&q.id) else { continue };
        for doc_id in judged.keys() {
            let Some(d) = doc_index.get(doc_id.as_str()) else { continue };
            scored.push((q.id.clone(), doc_id.clone(), scorer.score(q, d)?));
        }
    }
    crate::metrics::rankings_from_triples(&scored).map_err(|e| format!("{e}"))
}
