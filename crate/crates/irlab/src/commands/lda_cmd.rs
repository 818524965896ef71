//! `lda`: fit the collapsed-Gibbs topic model and export topic word lists.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;
use serde_json::json;

use irlab_core::topics::{fit_lda, top_words, LdaConfig};

use crate::commands::ensure_out_dir;
use crate::config::resolve_seed;
use crate::formats::fmt_g6;
use crate::pipeline::{load_collection, VocabSource};
use crate::{manifest, CliError, ConfigContext};

#[derive(Debug, Args)]
pub struct LdaArgs {
    #[arg(long)]
    pub corpus: PathBuf,

    /// Number of topics.
    #[arg(long, default_value_t = 50)]
    pub k: usize,

    /// Document-topic smoothing; defaults to 50 / K.
    #[arg(long)]
    pub alpha: Option<f64>,

    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,

    #[arg(long, default_value_t = 500)]
    pub iters: usize,

    /// Words listed per topic.
    #[arg(long, default_value_t = 50)]
    pub per_topic: usize,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long, default_value_t = 1)]
    pub min_count: u64,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: LdaArgs) -> Result<(), CliError> {
    if args.k == 0 {
        return Err(anyhow!("--k must be at least 1")).config_err();
    }
    let seed = resolve_seed(args.seed, None).config_err()?;
    let collection = load_collection(
        &args.corpus,
        None,
        VocabSource::Build { min_count: args.min_count },
    )?;
    let docs: Vec<Vec<u32>> =
        collection.documents.iter().map(|d| d.tokens.clone()).collect();

    let config = LdaConfig {
        n_topics: args.k,
        alpha: args.alpha,
        beta: args.beta,
        iterations: args.iters,
        seed,
    };
    let model = fit_lda(&docs, collection.vocab.size(), &config);
    let lists = top_words(&model, args.per_topic);

    ensure_out_dir(&args.out)?;
    let mut topics_json: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for (k, list) in lists.iter().enumerate() {
        topics_json.insert(
            format!("{k}"),
            list.iter().map(|&w| collection.vocab.token(w)).collect(),
        );
    }
    std::fs::write(
        args.out.join("topics.json"),
        serde_json::to_string_pretty(&topics_json).map_err(anyhow::Error::from)? + "\n",
    )
    .map_err(anyhow::Error::from)?;

    let mut ll_csv = String::from("iteration,log_likelihood\n");
    for (i, ll) in model.log_likelihood.iter().enumerate() {
        let _ = writeln!(ll_csv, "{},{}", i + 1, fmt_g6(*ll));
    }
    std::fs::write(args.out.join("loglik.csv"), ll_csv).map_err(anyhow::Error::from)?;

    manifest::write_manifest(
        &args.out,
        "lda",
        seed,
        json!({
            "corpus": args.corpus.display().to_string(),
            "k": args.k,
            "alpha": model.alpha,
            "beta": args.beta,
            "iters": args.iters,
            "per_topic": args.per_topic,
            "min_count": args.min_count,
        }),
    )?;
    let union: std::collections::BTreeSet<&str> =
        topics_json.values().flatten().copied().collect();
    println!(
        "fitted {} topics over {} documents; top-word union {}",
        args.k,
        docs.len(),
        union.len()
    );
    Ok(())
}
