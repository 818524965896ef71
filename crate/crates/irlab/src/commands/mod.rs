//! Subcommand definitions and dispatch.

mod axioms_cmd;
mod diagnose;
mod eval;
mod gen;
mod gradcheck_cmd;
mod lda_cmd;
mod score;
mod train;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "irlab",
    version,
    about = "Scoring functions, toy neural matchers, and ranking diagnostics for text retrieval",
    after_help = "Seeds resolve as: --seed flag, then config file, then the IRLAB_SEED \
                  environment variable. Reruns with the same configuration and seed produce \
                  byte-identical data files (timestamps live only in manifest.json)."
)]
pub struct Cli {
    /// Parallelism hint. Every stage currently executes sequentially and
    /// produces identical output for any value, by the split-stream RNG
    /// contract.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic benchmark with planted ground truth.
    GenSynthetic(gen::GenSyntheticArgs),
    /// Train a matcher on preference triples.
    Train(train::TrainArgs),
    /// Score judged query-document pairs into a TREC run file.
    Score(score::ScoreArgs),
    /// Evaluate a run against qrels (NDCG@k, P@k, MAP).
    Eval(eval::EvalArgs),
    /// Probe a scorer against the retrieval constraints.
    Axioms(axioms_cmd::AxiomsArgs),
    /// Model and feature diagnostics.
    #[command(subcommand)]
    Diagnose(diagnose::DiagnoseCmd),
    /// Fit a topic model by collapsed Gibbs sampling.
    Lda(lda_cmd::LdaArgs),
    /// Verify gradients against central differences.
    GradCheck(gradcheck_cmd::GradCheckArgs),
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenSynthetic(args) => gen::run(args),
        Command::Train(args) => train::run(args),
        Command::Score(args) => score::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Axioms(args) => axioms_cmd::run(args),
        Command::Diagnose(cmd) => diagnose::run(cmd),
        Command::Lda(args) => lda_cmd::run(args),
        Command::GradCheck(args) => gradcheck_cmd::run(args),
    }
}

/// Flags shared by commands that read a scorer.
#[derive(Debug, Clone, Args)]
pub struct ScorerArgs {
    /// Classical scorer: bm25, tfidf, or lm_jm.
    #[arg(long, conflicts_with = "model_dir")]
    pub scorer: Option<String>,

    /// Directory of a trained model (checkpoint.txt, model.json,
    /// vocab.txt).
    #[arg(long)]
    pub model_dir: Option<PathBuf>,

    /// Wrap the scorer to see only the first N document tokens.
    #[arg(long)]
    pub truncate: Option<usize>,

    /// Wrap the scorer to aggregate over passages: LEN,STRIDE[,mean].
    #[arg(long)]
    pub passages: Option<String>,

    /// Minimum collection frequency when building a vocabulary from the
    /// corpus (classical scorers).
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
}

impl ScorerArgs {
    pub fn spec(&self) -> Result<crate::pipeline::ScorerSpec, CliError> {
        use crate::ConfigContext;
        match (&self.scorer, &self.model_dir) {
            (Some(name), None) => {
                if !matches!(name.as_str(), "bm25" | "tfidf" | "lm_jm" | "lmjm") {
                    return Err(anyhow::anyhow!(
                        "unknown scorer {name:?} (expected bm25, tfidf, lm_jm)"
                    ))
                    .config_err();
                }
                Ok(crate::pipeline::ScorerSpec::Classic(name.clone()))
            }
            (None, Some(dir)) => Ok(crate::pipeline::ScorerSpec::ModelDir(dir.clone())),
            _ => Err(anyhow::anyhow!("pass exactly one of --scorer or --model-dir"))
                .config_err(),
        }
    }

    pub fn wrappers(&self) -> Result<crate::pipeline::ScorerWrappers, CliError> {
        use crate::ConfigContext;
        let passages = match &self.passages {
            None => None,
            Some(text) => {
                let parts: Vec<&str> = text.split(',').collect();
                let parse = |s: &str| s.trim().parse::<usize>();
                match parts.as_slice() {
                    [len, stride] => Some((
                        parse(len).map_err(anyhow::Error::from).config_err()?,
                        parse(stride).map_err(anyhow::Error::from).config_err()?,
                        false,
                    )),
                    [len, stride, agg] => {
                        let use_mean = match agg.trim() {
                            "mean" => true,
                            "max" => false,
                            other => {
                                return Err(anyhow::anyhow!(
                                    "passage aggregation must be max or mean, got {other:?}"
                                ))
                                .config_err()
                            }
                        };
                        Some((
                            parse(len).map_err(anyhow::Error::from).config_err()?,
                            parse(stride).map_err(anyhow::Error::from).config_err()?,
                            use_mean,
                        ))
                    }
                    _ => {
                        return Err(anyhow::anyhow!(
                            "--passages expects LEN,STRIDE[,max|mean], got {text:?}"
                        ))
                        .config_err()
                    }
                }
            }
        };
        Ok(crate::pipeline::ScorerWrappers { truncate: self.truncate, passages })
    }
}

pub(crate) fn ensure_out_dir(path: &PathBuf) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| anyhow::anyhow!("creating output directory {}: {e}", path.display()))
        .map_err(CliError::Runtime)
}
