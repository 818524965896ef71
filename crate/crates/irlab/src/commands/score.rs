//! `score`: rank every judged document for each query and write a TREC run.

use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;
use serde_json::json;

use irlab_core::metrics::rankings_from_triples;

use crate::commands::{ensure_out_dir, ScorerArgs};
use crate::config::resolve_seed;
use crate::formats::{self, RunEntry};
use crate::pipeline::{build_scorer, load_collection, scorer_vocab_source};
use crate::{manifest, CliError, ConfigContext};

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub topics: PathBuf,
    /// Qrels naming the candidate documents per query.
    #[arg(long)]
    pub qrels: PathBuf,

    #[command(flatten)]
    pub scorer: ScorerArgs,

    /// Run tag written into the sixth column.
    #[arg(long, default_value = "irlab")]
    pub tag: String,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: ScoreArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed, Some(0)).config_err()?;
    let spec = args.scorer.spec()?;
    let wrappers = args.scorer.wrappers()?;
    let vocab_source = scorer_vocab_source(&spec, args.scorer.min_count)?;
    let collection = load_collection(&args.corpus, Some(&args.topics), vocab_source)?;
    let qrels = formats::parse_qrels(&args.qrels)?;
    let scorer = build_scorer(&spec, &collection.stats, &wrappers)?;

    let mut scored: Vec<(String, String, f64)> = Vec::new();
    for query in &collection.queries {
        let Some(judged) = qrels.judged(&query.id) else { continue };
        for doc_id in judged.keys() {
            let doc = collection
                .document(doc_id)
                .ok_or_else(|| anyhow!("qrels references unknown document {doc_id:?}"))?;
            let s = scorer.score(query, doc).map_err(|e| anyhow!(e))?;
            scored.push((query.id.clone(), doc_id.clone(), s));
        }
    }
    if scored.is_empty() {
        return Err(anyhow!("no (query, document) pairs to score")).config_err();
    }
    let rankings = rankings_from_triples(&scored).map_err(|e| anyhow!("{e}"))?;
    let mut run = Vec::new();
    for ranked in &rankings {
        for (rank0, (doc_id, score)) in ranked.entries().iter().enumerate() {
            run.push(RunEntry {
                query_id: ranked.query_id.clone(),
                doc_id: doc_id.clone(),
                rank: rank0 + 1,
                score: *score,
                tag: args.tag.clone(),
            });
        }
    }

    ensure_out_dir(&args.out)?;
    formats::write_run(&args.out.join("run.txt"), &run)?;
    manifest::write_manifest(
        &args.out,
        "score",
        seed,
        json!({
            "corpus": args.corpus.display().to_string(),
            "topics": args.topics.display().to_string(),
            "qrels": args.qrels.display().to_string(),
            "scorer": scorer.name(),
            "tag": args.tag,
        }),
    )?;
    println!("scored {} pairs over {} queries", run.len(), rankings.len());
    Ok(())
}
