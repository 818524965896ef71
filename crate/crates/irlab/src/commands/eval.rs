//! `eval`: metric tables for a run file against qrels.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;
use serde_json::json;

use irlab_core::metrics::{evaluate_run, RankedList};

use crate::commands::ensure_out_dir;
use crate::{formats, manifest, report, CliError, ConfigContext};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,

    /// Comma-separated rank cutoffs for NDCG@k and P@k.
    #[arg(long, default_value = "1,10")]
    pub cutoffs: String,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    let cutoffs: Vec<usize> = args
        .cutoffs
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow!("--cutoffs expects comma-separated integers, got {:?}", args.cutoffs))
        .config_err()?;
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(anyhow!("cutoffs must be positive")).config_err();
    }

    let entries = formats::parse_run(&args.run)?;
    let qrels = formats::parse_qrels(&args.qrels)?;
    let mut grouped: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for e in entries {
        grouped.entry(e.query_id).or_default().push((e.doc_id, e.score));
    }
    let run: Vec<RankedList> = grouped
        .into_iter()
        .map(|(qid, docs)| RankedList::from_scores(qid, docs))
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow!("{e}"))?;
    let eval = evaluate_run(&run, &qrels, &cutoffs).map_err(|e| anyhow!("{e}"))?;

    ensure_out_dir(&args.out)?;
    report::write_metrics_csv(&args.out.join("metrics.csv"), &eval)?;
    report::write_metrics_summary(&args.out.join("summary.json"), &eval)?;
    manifest::write_manifest(
        &args.out,
        "eval",
        0,
        json!({
            "run": args.run.display().to_string(),
            "qrels": args.qrels.display().to_string(),
            "cutoffs": cutoffs,
        }),
    )?;
    for (name, mean) in eval.metric_names.iter().zip(&eval.means) {
        println!("{name} = {}", formats::fmt_g6(*mean));
    }
    Ok(())
}
