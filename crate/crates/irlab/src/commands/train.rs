//! `train`: fit a matcher on preference triples and save the model
//! directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::Args;
use serde_json::json;

use irlab_core::matchers::{
    train_pairwise, IntConfig, IntModel, RepConfig, RepModel, TrainHyper, Triple,
};
use irlab_core::rng::Rng;
use irlab_core::tensor::OptimizerKind;

use crate::checkpoint::{save_model, similarity_from_string, AnyModel};
use crate::commands::ensure_out_dir;
use crate::config::{resolve_seed, TrainFileConfig};
use crate::formats::fmt_g6;
use crate::pipeline::{load_collection, VocabSource};
use crate::{formats, manifest, CliError, ConfigContext};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON config file; flags below override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Model family: rep (Siamese representation) or int (interaction
    /// matrix).
    #[arg(long)]
    pub model: Option<String>,

    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub topics: Option<PathBuf>,
    #[arg(long)]
    pub triples: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// adaptive-moment or plain-sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// dot, cosine, or gaussian:<sigma> (interaction model).
    #[arg(long)]
    pub similarity: Option<String>,
    /// Pool each query-term row individually (interaction model).
    #[arg(long)]
    pub row_pooling: bool,
    /// Document truncation length inside the model.
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub min_count: Option<u64>,
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => TrainFileConfig::load(path).config_err()?,
        None => TrainFileConfig::default(),
    };
    let seed = resolve_seed(args.seed, file.seed).config_err()?;
    let model_kind = args
        .model
        .or(file.model)
        .ok_or_else(|| anyhow!("--model (rep or int) is required"))
        .config_err()?;
    let corpus = args
        .corpus
        .or(file.corpus)
        .ok_or_else(|| anyhow!("--corpus is required"))
        .config_err()?;
    let topics = args
        .topics
        .or(file.topics)
        .ok_or_else(|| anyhow!("--topics is required"))
        .config_err()?;
    let triples_path = args
        .triples
        .or(file.triples)
        .ok_or_else(|| anyhow!("--triples is required"))
        .config_err()?;
    let out = args.out.or(file.out).ok_or_else(|| anyhow!("--out is required")).config_err()?;

    let epochs = args.epochs.or(file.epochs).unwrap_or(10);
    let rate = args.rate.or(file.rate).unwrap_or(0.01);
    let margin = args.margin.or(file.margin).unwrap_or(1.0);
    let batch = args.batch.or(file.batch).unwrap_or(16);
    let optimizer_name =
        args.optimizer.or(file.optimizer).unwrap_or_else(|| "adaptive-moment".to_string());
    let optimizer = match optimizer_name.as_str() {
        "adaptive-moment" => OptimizerKind::AdaptiveMoment,
        "plain-sgd" => OptimizerKind::PlainSgd,
        other => {
            return Err(anyhow!(
                "unknown optimizer {other:?} (adaptive-moment or plain-sgd)"
            ))
            .config_err()
        }
    };
    let similarity_name =
        args.similarity.or(file.similarity).unwrap_or_else(|| "cosine".to_string());
    let similarity = similarity_from_string(&similarity_name).config_err()?;
    let row_pooling = args.row_pooling || file.row_pooling.unwrap_or(false);
    let max_len = args.max_len.or(file.max_len).unwrap_or(500);
    let embed_dim = args.embed_dim.or(file.embed_dim).unwrap_or(50);
    let min_count = args.min_count.or(file.min_count).unwrap_or(1);

    let collection = load_collection(
        &corpus,
        Some(&topics),
        VocabSource::Build { min_count },
    )?;
    let triples_raw = formats::parse_triples(&triples_path)?;

    let query_index: BTreeMap<&str, usize> = collection
        .queries
        .iter()
        .enumerate()
        .map(|(i, q)| (q.id.as_str(), i))
        .collect();
    let mut triples = Vec::with_capacity(triples_raw.len());
    for (qid, pos, neg) in &triples_raw {
        let q = *query_index
            .get(qid.as_str())
            .ok_or_else(|| anyhow!("triple references unknown query {qid:?}"))?;
        let p = collection
            .document(pos)
            .ok_or_else(|| anyhow!("triple references unknown document {pos:?}"))?;
        let n = collection
            .document(neg)
            .ok_or_else(|| anyhow!("triple references unknown document {neg:?}"))?;
        triples.push(Triple {
            query: collection.queries[q].tokens.as_slice(),
            positive: p.tokens.as_slice(),
            negative: n.tokens.as_slice(),
        });
    }

    let hyper = TrainHyper { epochs, rate, margin, batch, seed, optimizer };
    let mut init_rng = Rng::from_seed(seed ^ 0x5eed_1017);
    let vocab_size = collection.vocab.size();

    let (any_model, trace) = match model_kind.as_str() {
        "rep" => {
            let config = RepConfig {
                embed_dim,
                channels: args.channels.or(file.channels).unwrap_or(32),
                widths: vec![2, 3],
                hidden: args.hidden.or(file.hidden).unwrap_or(20),
                max_doc_len: max_len,
            };
            let mut model = RepModel::new(vocab_size, config, &mut init_rng);
            let trace =
                train_pairwise(&mut model, &triples, &hyper).map_err(|e| anyhow!("{e}"))?;
            (AnyModel::Rep(model), trace)
        }
        "int" => {
            let config = IntConfig {
                embed_dim,
                channels: args.channels.or(file.channels).unwrap_or(8),
                kernel: 3,
                grid: (3, 10),
                hidden: args.hidden.or(file.hidden).unwrap_or(20),
                similarity,
                row_pooling,
                max_doc_len: max_len,
            };
            let mut model = IntModel::new(vocab_size, config, &mut init_rng);
            let trace =
                train_pairwise(&mut model, &triples, &hyper).map_err(|e| anyhow!("{e}"))?;
            (AnyModel::Int(model), trace)
        }
        other => return Err(anyhow!("unknown model {other:?} (rep or int)")).config_err(),
    };

    ensure_out_dir(&out)?;
    save_model(&out, &any_model, collection.vocab.listing())?;
    let mut loss_csv = String::from("epoch,mean_hinge\n");
    for (i, loss) in trace.iter().enumerate() {
        let _ = writeln!(loss_csv, "{},{}", i + 1, fmt_g6(*loss));
    }
    std::fs::write(out.join("loss.csv"), loss_csv)
        .with_context(|| format!("writing {}", out.join("loss.csv").display()))?;

    manifest::write_manifest(
        &out,
        "train",
        seed,
        json!({
            "model": model_kind,
            "corpus": corpus.display().to_string(),
            "topics": topics.display().to_string(),
            "triples": triples_path.display().to_string(),
            "epochs": epochs,
            "rate": rate,
            "margin": margin,
            "batch": batch,
            "optimizer": optimizer_name,
            "similarity": similarity_name,
            "row_pooling": row_pooling,
            "max_len": max_len,
            "embed_dim": embed_dim,
            "min_count": min_count,
        }),
    )?;
    println!(
        "trained {model_kind} for {} epochs; final mean hinge {}",
        trace.len(),
        fmt_g6(trace.last().copied().unwrap_or(0.0))
    );
    Ok(())
}
