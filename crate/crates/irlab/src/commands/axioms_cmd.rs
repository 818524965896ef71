//! `axioms`: run the constraint-probe suite against a scorer.

use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;
use serde_json::json;

use irlab_core::axioms::{run_suite, AxiomId, ProbeContext, SuiteConfig};
use irlab_core::text::{tokenize, TokenizeConfig, Vocabulary};

use crate::commands::{ensure_out_dir, ScorerArgs};
use crate::config::resolve_seed;
use crate::pipeline::{build_scorer, scorer_vocab_source, VocabSource};
use crate::{formats, manifest, report, CliError, ConfigContext};

#[derive(Debug, Args)]
pub struct AxiomsArgs {
    /// Corpus supplying probe base documents and collection statistics.
    #[arg(long)]
    pub corpus: PathBuf,

    #[command(flatten)]
    pub scorer: ScorerArgs,

    /// Probes per axiom.
    #[arg(long, default_value_t = 200)]
    pub n: usize,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Comma-separated axiom subset (default: all of tfc1, tfc2, tdc,
    /// lnc1, lnc2, tf_lnc, tsfc).
    #[arg(long)]
    pub axioms: Option<String>,

    /// Relative tie tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub tie_tol: f64,

    /// Term-frequency edits only at 0-based positions at or beyond this.
    #[arg(long)]
    pub edit_min_pos: Option<usize>,

    /// Require probed terms to be absent from the base document.
    #[arg(long)]
    pub fresh_term: bool,

    /// Exact occurrences planted by semantic-balance probes.
    #[arg(long, default_value_t = 4)]
    pub tsfc_count: usize,

    /// Embedding dimension for the fallback probe table.
    #[arg(long, default_value_t = 50)]
    pub embed_dim: usize,

    /// Also write per-probe rows to probes.csv.
    #[arg(long)]
    pub detail: bool,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: AxiomsArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed, None).config_err()?;
    let spec = args.scorer.spec()?;
    let wrappers = args.scorer.wrappers()?;

    let raw_docs = formats::parse_corpus(&args.corpus)?;
    let doc_config = TokenizeConfig::documents();
    let token_docs: Vec<(String, Vec<String>)> = raw_docs
        .iter()
        .map(|(id, text)| (id.clone(), tokenize(text, &doc_config)))
        .collect();

    // Models probe against their own vocabulary so token ids address the
    // right embedding rows.
    let ctx = match scorer_vocab_source(&spec, args.scorer.min_count)? {
        VocabSource::Build { min_count } => {
            let tokens: Vec<Vec<String>> = token_docs.iter().map(|(_, t)| t.clone()).collect();
            let vocab =
                Vocabulary::build(&tokens, min_count).map_err(|e| anyhow!("{e}"))?;
            ProbeContext::with_vocab(&token_docs, vocab, args.embed_dim, seed ^ 0xe3bd)
        }
        VocabSource::Listing(listing) => {
            let tokens: Vec<Vec<String>> = token_docs.iter().map(|(_, t)| t.clone()).collect();
            let vocab =
                Vocabulary::from_listing(&listing, &tokens).map_err(|e| anyhow!("{e}"))?;
            ProbeContext::with_vocab(&token_docs, vocab, args.embed_dim, seed ^ 0xe3bd)
        }
    };
    let scorer = build_scorer(&spec, &ctx.stats, &wrappers)?;

    let axiom_list = match &args.axioms {
        None => AxiomId::ALL.to_vec(),
        Some(text) => text
            .split(',')
            .map(|name| {
                AxiomId::from_name(name.trim())
                    .ok_or_else(|| anyhow!("unknown axiom {name:?}"))
            })
            .collect::<Result<_, _>>()
            .config_err()?,
    };
    let mut config = SuiteConfig::new(args.n, seed);
    config.axioms = axiom_list;
    config.tie_tol = args.tie_tol;
    config.detail = args.detail;
    config.options.fresh_term = args.fresh_term;
    config.options.tsfc_exact_count = args.tsfc_count;
    if let Some(p) = args.edit_min_pos {
        config.options.edit_min_pos = p;
    }

    let suite_report = run_suite(scorer.as_ref(), &ctx, &config).map_err(|e| anyhow!("{e}"))?;

    ensure_out_dir(&args.out)?;
    report::write_axiom_report(&args.out.join("axioms.json"), &suite_report)?;
    if args.detail {
        report::write_probe_details(&args.out.join("probes.csv"), &suite_report)?;
    }
    manifest::write_manifest(
        &args.out,
        "axioms",
        seed,
        json!({
            "corpus": args.corpus.display().to_string(),
            "scorer": suite_report.scorer,
            "n": args.n,
            "tie_tol": args.tie_tol,
            "edit_min_pos": args.edit_min_pos,
            "fresh_term": args.fresh_term,
            "tsfc_count": args.tsfc_count,
            "axioms": config.axioms.iter().map(|a| a.name()).collect::<Vec<_>>(),
        }),
    )?;
    for s in &suite_report.stats {
        println!(
            "{}: pass {}/{} (tie {}, skip {}), mean margin {}",
            s.axiom.name(),
            s.pass,
            s.run,
            s.tie,
            s.skipped,
            formats::fmt_g6(s.mean_margin)
        );
    }
    Ok(())
}
