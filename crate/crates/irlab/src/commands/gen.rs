//! `gen-synthetic`: write a planted-ground-truth benchmark to disk.

use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;
use serde_json::json;

use irlab_core::synthetic::{gen_density_match, gen_topic_match, Annotation, SynthConfig};

use crate::commands::ensure_out_dir;
use crate::config::resolve_seed;
use crate::{formats, manifest, CliError, ConfigContext};

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    /// desk-topic, desk-density, full-topic, or full-density.
    #[arg(long)]
    pub preset: String,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Override the preset's query count.
    #[arg(long)]
    pub queries: Option<usize>,

    /// Override the preset's document length range as MIN,MAX.
    #[arg(long)]
    pub doc_len: Option<String>,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: GenSyntheticArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed, None).config_err()?;
    let (scale, task) = args
        .preset
        .split_once('-')
        .ok_or_else(|| anyhow!("preset must look like desk-topic, got {:?}", args.preset))
        .config_err()?;
    let mut config = match scale {
        "desk" => SynthConfig::desk(seed),
        "full" => SynthConfig::full(seed),
        other => {
            return Err(anyhow!("unknown preset scale {other:?} (desk or full)")).config_err()
        }
    };
    if let Some(n) = args.queries {
        config.n_queries = n;
    }
    if let Some(range) = &args.doc_len {
        let (lo, hi) = range
            .split_once(',')
            .ok_or_else(|| anyhow!("--doc-len expects MIN,MAX"))
            .config_err()?;
        config.doc_len = (
            lo.trim().parse().map_err(anyhow::Error::from).config_err()?,
            hi.trim().parse().map_err(anyhow::Error::from).config_err()?,
        );
    }
    let data = match task {
        "topic" => gen_topic_match(&config),
        "density" => gen_density_match(&config),
        other => {
            return Err(anyhow!("unknown preset task {other:?} (topic or density)")).config_err()
        }
    };

    ensure_out_dir(&args.out)?;
    formats::write_corpus(&args.out.join("corpus.tsv"), &data.documents)?;
    formats::write_corpus(&args.out.join("topics.tsv"), &data.queries)?;
    formats::write_qrels(&args.out.join("qrels.txt"), &data.qrels)?;
    formats::write_triples(&args.out.join("triples.tsv"), &data.triples)?;

    let records: Vec<serde_json::Value> = data
        .records
        .iter()
        .map(|r| match &r.annotation {
            Annotation::Topic { sequence, position } => json!({
                "query_id": r.query_id,
                "relevant_doc_id": r.relevant_doc_id,
                "topic": sequence,
                "position": position,
            }),
            Annotation::Density { relevant_count, irrelevant_counts, relevant_positions } => {
                json!({
                    "query_id": r.query_id,
                    "relevant_doc_id": r.relevant_doc_id,
                    "relevant_count": relevant_count,
                    "irrelevant_counts": irrelevant_counts,
                    "relevant_positions": relevant_positions,
                })
            }
        })
        .collect();
    let annotations = json!({
        "task": task,
        "topic_pool": data.topic_pool,
        "records": records,
    });
    std::fs::write(
        args.out.join("annotations.json"),
        serde_json::to_string_pretty(&annotations).map_err(anyhow::Error::from)? + "\n",
    )
    .map_err(anyhow::Error::from)?;

    manifest::write_manifest(
        &args.out,
        "gen-synthetic",
        seed,
        json!({
            "preset": args.preset,
            "n_queries": config.n_queries,
            "vocab_size": config.vocab_size,
            "query_len": [config.query_len.0, config.query_len.1],
            "doc_len": [config.doc_len.0, config.doc_len.1],
            "topic_pool": config.topic_pool,
            "topic_len": [config.topic_len.0, config.topic_len.1],
            "density_relevant": config.density_relevant,
            "density_irrelevant": config.density_irrelevant,
        }),
    )?;
    println!(
        "wrote {} queries, {} documents to {}",
        data.queries.len(),
        data.documents.len(),
        args.out.display()
    );
    Ok(())
}
