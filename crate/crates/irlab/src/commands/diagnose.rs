//! `diagnose`: feature-robustness ablation, pooling-word extraction,
//! last-match-position histogram, and overlap curves.

use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::anyhow;
use clap::{Args, Subcommand};
use serde_json::json;

use irlab_core::classic::{feature_vector, FEATURE_NAMES};
use irlab_core::diagnostics::{
    last_match_positions, overlap_curve, robustness_curve, FeatureSet,
};
use irlab_core::matchers::{pooling_query_rate, pooling_words, Matcher};
use irlab_core::rng::Rng;

use crate::checkpoint::{load_model, AnyModel};
use crate::commands::ensure_out_dir;
use crate::config::resolve_seed;
use crate::pipeline::{load_collection, Collection, VocabSource};
use crate::{formats, manifest, report, CliError, ConfigContext};

#[derive(Debug, Subcommand)]
pub enum DiagnoseCmd {
    /// Fit a linear probe, remove features by importance, track the metric.
    Robustness(RobustnessArgs),
    /// Extract and rank document-side pooling words of a trained model.
    Pooling(PoolingArgs),
    /// Histogram of last query-term match positions.
    Positions(PositionsArgs),
    /// Overlap ratio of a ranked word list against a reference set.
    Overlap(OverlapArgs),
}

pub fn run(cmd: DiagnoseCmd) -> Result<(), CliError> {
    match cmd {
        DiagnoseCmd::Robustness(args) => robustness(args),
        DiagnoseCmd::Pooling(args) => pooling(args),
        DiagnoseCmd::Positions(args) => positions(args),
        DiagnoseCmd::Overlap(args) => overlap(args),
    }
}

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub topics: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,

    /// `classic` for the hand-crafted feature vector, or a model directory
    /// for its final hidden activations.
    #[arg(long)]
    pub features: String,

    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,

    /// Fraction of queries in the training split.
    #[arg(long, default_value_t = 0.5)]
    pub train_frac: f64,

    /// Refit the probe after each removal instead of zeroing features.
    #[arg(long)]
    pub refit: bool,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long, default_value_t = 1)]
    pub min_count: u64,

    #[arg(long)]
    pub out: PathBuf,
}

fn load_for_features(
    args_features: &str,
    corpus: &std::path::Path,
    topics: &std::path::Path,
    min_count: u64,
) -> Result<(Collection, Option<AnyModel>), CliError> {
    if args_features == "classic" {
        let collection =
            load_collection(corpus, Some(topics), VocabSource::Build { min_count })?;
        Ok((collection, None))
    } else {
        let dir = PathBuf::from(args_features);
        let (model, listing) = load_model(&dir)?;
        let collection = load_collection(corpus, Some(topics), VocabSource::Listing(listing))?;
        Ok((collection, Some(model)))
    }
}

fn robustness(args: RobustnessArgs) -> Result<(), CliError> {
    if !(0.0 < args.train_frac && args.train_frac < 1.0) {
        return Err(anyhow!("--train-frac must be in (0, 1)")).config_err();
    }
    let seed = resolve_seed(args.seed, None).config_err()?;
    let qrels = formats::parse_qrels(&args.qrels)?;
    let (collection, model) =
        load_for_features(&args.features, &args.corpus, &args.topics, args.min_count)?;

    let feature_names: Vec<String> = match &model {
        None => FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        Some(m) => {
            let hidden = match m {
                AnyModel::Rep(m) => m.config().hidden,
                AnyModel::Int(m) => m.config().hidden,
            };
            (0..hidden).map(|i| format!("hidden{i:02}")).collect()
        }
    };
    let mut set = FeatureSet::new(feature_names.clone());
    for query in &collection.queries {
        let Some(judged) = qrels.judged(&query.id) else { continue };
        for (doc_id, &grade) in judged {
            let doc = collection
                .document(doc_id)
                .ok_or_else(|| anyhow!("qrels references unknown document {doc_id:?}"))?;
            let features = match &model {
                None => feature_vector(query, doc, &collection.stats),
                Some(AnyModel::Rep(m)) => {
                    m.score_traced(&query.tokens, &doc.tokens)
                        .map_err(|e| anyhow!("{e}"))?
                        .hidden
                }
                Some(AnyModel::Int(m)) => {
                    m.score_traced(&query.tokens, &doc.tokens)
                        .map_err(|e| anyhow!("{e}"))?
                        .hidden
                }
            };
            set.push_row(&query.id, doc_id, grade, &features).map_err(|e| anyhow!("{e}"))?;
        }
    }
    if set.is_empty() {
        return Err(anyhow!("no judged pairs found")).config_err();
    }

    // Deterministic seeded split over query ids.
    let mut qids: Vec<String> = set.query_id_set().into_iter().collect();
    let mut rng = Rng::from_seed(seed);
    rng.shuffle(&mut qids);
    let n_train = ((qids.len() as f64) * args.train_frac).round().max(1.0) as usize;
    let n_train = n_train.min(qids.len() - 1);
    let train: BTreeSet<String> = qids.into_iter().take(n_train).collect();

    let result =
        robustness_curve(&set, &train, args.l2, args.refit).map_err(|e| anyhow!("{e}"))?;

    ensure_out_dir(&args.out)?;
    write_feature_csv(&args.out.join("features.csv"), &set)?;
    report::write_curve_csv(&args.out.join("robustness.csv"), &result.curve)?;
    let order: Vec<&str> =
        result.removal_order.iter().map(|&i| feature_names[i].as_str()).collect();
    report::write_curve_meta(
        &args.out.join("robustness_meta.json"),
        &result.curve,
        json!({
            "removal_order": order,
            "l2": args.l2,
            "refit": args.refit,
            "train_queries": n_train,
        }),
    )?;
    manifest::write_manifest(
        &args.out,
        "diagnose robustness",
        seed,
        json!({
            "corpus": args.corpus.display().to_string(),
            "qrels": args.qrels.display().to_string(),
            "features": args.features,
            "l2": args.l2,
            "train_frac": args.train_frac,
            "refit": args.refit,
        }),
    )?;
    println!(
        "robustness: full-metric {} -> after all removals {}",
        formats::fmt_g6(result.curve.y_at_index(0)),
        formats::fmt_g6(result.curve.y_at_index(result.curve.len() - 1))
    );
    Ok(())
}

/// `qid,docid,grade` plus one named column per feature component.
fn write_feature_csv(path: &std::path::Path, set: &FeatureSet) -> Result<(), CliError> {
    use std::fmt::Write as _;
    let mut out = String::from("qid,docid,grade");
    for name in &set.feature_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..set.len() {
        let _ = write!(out, "{},{},{}", set.query_id(i), set.doc_id(i), set.grade(i));
        for v in set.row(i) {
            out.push(',');
            out.push_str(&formats::fmt_g6(*v));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| anyhow!("writing {}: {e}", path.display()))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct PoolingArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub topics: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,

    #[arg(long)]
    pub model_dir: PathBuf,

    /// Pool over `relevant` pairs only or `all` judged pairs.
    #[arg(long, default_value = "relevant")]
    pub pairs: String,

    /// How many ranked words to report.
    #[arg(long, default_value_t = 50)]
    pub top: usize,

    #[arg(long)]
    pub out: PathBuf,
}

fn pooling(args: PoolingArgs) -> Result<(), CliError> {
    let relevant_only = match args.pairs.as_str() {
        "relevant" => true,
        "all" => false,
        other => {
            return Err(anyhow!("--pairs must be relevant or all, got {other:?}")).config_err()
        }
    };
    let (model, listing) = load_model(&args.model_dir)?;
    let collection =
        load_collection(&args.corpus, Some(&args.topics), VocabSource::Listing(listing))?;
    let qrels = formats::parse_qrels(&args.qrels)?;

    let mut pairs: Vec<(&[u32], &[u32])> = Vec::new();
    for query in &collection.queries {
        let Some(judged) = qrels.judged(&query.id) else { continue };
        for (doc_id, &grade) in judged {
            if relevant_only && grade == 0 {
                continue;
            }
            let doc = collection
                .document(doc_id)
                .ok_or_else(|| anyhow!("qrels references unknown document {doc_id:?}"))?;
            pairs.push((query.tokens.as_slice(), doc.tokens.as_slice()));
        }
    }
    if pairs.is_empty() {
        return Err(anyhow!("no pairs selected")).config_err();
    }

    let (ranked, query_rate) = match &model {
        AnyModel::Rep(m) => (
            pooling_words(m, &pairs).map_err(|e| anyhow!("{e}"))?,
            pooling_query_rate(m, &pairs).map_err(|e| anyhow!("{e}"))?,
        ),
        AnyModel::Int(m) => (
            pooling_words(m, &pairs).map_err(|e| anyhow!("{e}"))?,
            pooling_query_rate(m, &pairs).map_err(|e| anyhow!("{e}"))?,
        ),
    };
    let named: Vec<(String, u64)> = ranked
        .iter()
        .map(|&(id, count)| (collection.vocab.token(id).to_string(), count))
        .collect();

    ensure_out_dir(&args.out)?;
    report::write_ranked_words(&args.out.join("pooling.csv"), &named)?;
    let top: Vec<&str> = named.iter().take(args.top).map(|(w, _)| w.as_str()).collect();
    let summary = json!({
        "pairs": pairs.len(),
        "distinct_words": named.len(),
        "per_event_query_rate": query_rate,
        "top_words": top,
    });
    std::fs::write(
        args.out.join("pooling_summary.json"),
        serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)? + "\n",
    )
    .map_err(anyhow::Error::from)?;
    manifest::write_manifest(
        &args.out,
        "diagnose pooling",
        0,
        json!({
            "corpus": args.corpus.display().to_string(),
            "qrels": args.qrels.display().to_string(),
            "model_dir": args.model_dir.display().to_string(),
            "pairs": args.pairs,
            "top": args.top,
        }),
    )?;
    println!(
        "pooled {} distinct words over {} pairs; per-event query rate {}",
        named.len(),
        pairs.len(),
        formats::fmt_g6(query_rate)
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct PositionsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub topics: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,

    /// Positions beyond this count toward the reported fraction.
    #[arg(long, default_value_t = 500)]
    pub threshold: usize,

    /// Histogram bin width in token positions.
    #[arg(long, default_value_t = 50)]
    pub bin: usize,

    #[arg(long, default_value_t = 1)]
    pub min_count: u64,

    #[arg(long)]
    pub out: PathBuf,
}

fn positions(args: PositionsArgs) -> Result<(), CliError> {
    let collection = load_collection(
        &args.corpus,
        Some(&args.topics),
        VocabSource::Build { min_count: args.min_count },
    )?;
    let qrels = formats::parse_qrels(&args.qrels)?;
    let mut pairs = Vec::new();
    for query in &collection.queries {
        let Some(judged) = qrels.judged(&query.id) else { continue };
        for doc_id in judged.keys() {
            let doc = collection
                .document(doc_id)
                .ok_or_else(|| anyhow!("qrels references unknown document {doc_id:?}"))?;
            pairs.push((query, doc));
        }
    }
    if pairs.is_empty() {
        return Err(anyhow!("no judged pairs found")).config_err();
    }
    let report_data = last_match_positions(&pairs, args.threshold, args.bin);

    ensure_out_dir(&args.out)?;
    report::write_curve_csv(&args.out.join("positions.csv"), &report_data.histogram)?;
    report::write_curve_meta(
        &args.out.join("positions_meta.json"),
        &report_data.histogram,
        json!({
            "threshold": report_data.threshold,
            "fraction_beyond": report_data.fraction_beyond,
            "pairs": report_data.n_pairs,
            "no_match": report_data.n_no_match,
            "bin": args.bin,
        }),
    )?;
    manifest::write_manifest(
        &args.out,
        "diagnose positions",
        0,
        json!({
            "corpus": args.corpus.display().to_string(),
            "qrels": args.qrels.display().to_string(),
            "threshold": args.threshold,
            "bin": args.bin,
        }),
    )?;
    println!(
        "{} pairs ({} without any match); fraction beyond {}: {}",
        report_data.n_pairs,
        report_data.n_no_match,
        report_data.threshold,
        formats::fmt_g6(report_data.fraction_beyond)
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    /// Ranked word list: `word,count` CSV (from diagnose pooling) or one
    /// word per line.
    #[arg(long)]
    pub ranked: PathBuf,

    /// Reference set: JSON array of words, or a topics.json mapping of
    /// topic index to word list.
    #[arg(long)]
    pub reference: PathBuf,

    #[arg(long, default_value_t = 500)]
    pub max_n: usize,

    #[arg(long)]
    pub out: PathBuf,
}

fn overlap(args: OverlapArgs) -> Result<(), CliError> {
    let ranked = report::read_ranked_words(&args.ranked)?;
    if ranked.is_empty() {
        return Err(anyhow!("ranked list {} is empty", args.ranked.display())).config_err();
    }
    let text = std::fs::read_to_string(&args.reference)
        .map_err(|e| anyhow!("reading {}: {e}", args.reference.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| anyhow!("parsing reference: {e}"))?;
    let mut reference: BTreeSet<String> = BTreeSet::new();
    match &value {
        serde_json::Value::Array(words) => {
            for w in words {
                if let Some(s) = w.as_str() {
                    reference.insert(s.to_string());
                }
            }
        }
        serde_json::Value::Object(map) => {
            for list in map.values() {
                if let Some(words) = list.as_array() {
                    for w in words {
                        if let Some(s) = w.as_str() {
                            reference.insert(s.to_string());
                        }
                    }
                }
            }
        }
        _ => return Err(anyhow!("reference must be a JSON array or object")).config_err(),
    }
    if reference.is_empty() {
        return Err(anyhow!("reference set is empty")).config_err();
    }

    let curve = overlap_curve(&ranked, &reference, args.max_n);
    ensure_out_dir(&args.out)?;
    report::write_curve_csv(&args.out.join("overlap.csv"), &curve)?;
    report::write_curve_meta(
        &args.out.join("overlap_meta.json"),
        &curve,
        json!({
            "reference_size": reference.len(),
            "ranked_words": ranked.len(),
            "max_n": args.max_n,
        }),
    )?;
    manifest::write_manifest(
        &args.out,
        "diagnose overlap",
        0,
        json!({
            "ranked": args.ranked.display().to_string(),
            "reference": args.reference.display().to_string(),
            "max_n": args.max_n,
        }),
    )?;
    let last = curve.points().last().map(|&(_, y)| y).unwrap_or(0.0);
    println!("overlap at n={}: {}", curve.len(), formats::fmt_g6(last));
    Ok(())
}
