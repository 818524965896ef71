//! Report serialization: metric tables, axiom reports, and curves, as CSV
//! plus JSON summaries. All floats go through the six-significant-digit
//! formatter so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::json;

use irlab_core::axioms::{AxiomReport, ProbeOutcome};
use irlab_core::diagnostics::Curve;
use irlab_core::metrics::EvalReport;

use crate::formats::fmt_g6;

/// `qid,metric,value` rows for every query, then `all,metric,mean` rows.
pub fn write_metrics_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut out = String::from("qid,metric,value\n");
    for row in &report.rows {
        for (name, value) in report.metric_names.iter().zip(&row.values) {
            let _ = writeln!(out, "{},{},{}", row.query_id, name, fmt_g6(*value));
        }
    }
    for (name, mean) in report.metric_names.iter().zip(&report.means) {
        let _ = writeln!(out, "all,{},{}", name, fmt_g6(*mean));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Mean metrics plus the flagged (unjudged) query list.
pub fn write_metrics_summary(path: &Path, report: &EvalReport) -> Result<()> {
    let means: BTreeMap<&str, f64> = report
        .metric_names
        .iter()
        .map(String::as_str)
        .zip(report.means.iter().copied())
        .collect();
    let unjudged: Vec<&str> = report
        .rows
        .iter()
        .filter(|r| r.unjudged)
        .map(|r| r.query_id.as_str())
        .collect();
    let value = json!({
        "queries": report.rows.len(),
        "means": means,
        "unjudged_queries": unjudged,
    });
    fs::write(path, serde_json::to_string_pretty(&value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

/// `{axiom: {attempted, run, pass, fail, tie, skipped, pass_rate,
/// mean_margin}}`.
pub fn write_axiom_report(path: &Path, report: &AxiomReport) -> Result<()> {
    let mut body = BTreeMap::new();
    for s in &report.stats {
        body.insert(
            s.axiom.name(),
            json!({
                "attempted": s.attempted,
                "n": s.run,
                "pass": s.pass,
                "fail": s.fail,
                "tie": s.tie,
                "skipped": s.skipped,
                "pass_rate": s.pass_rate(),
                "mean_margin": s.mean_margin,
            }),
        );
    }
    let value = json!({ "scorer": report.scorer, "axioms": body });
    fs::write(path, serde_json::to_string_pretty(&value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

/// One row per checked probe: `axiom,index,outcome,margin`.
pub fn write_probe_details(path: &Path, report: &AxiomReport) -> Result<()> {
    let mut out = String::from("axiom,index,outcome,margin\n");
    for d in &report.details {
        let outcome = match d.outcome {
            ProbeOutcome::Pass => "pass",
            ProbeOutcome::Fail => "fail",
            ProbeOutcome::Tie => "tie",
        };
        let _ = writeln!(out, "{},{},{},{}", d.axiom.name(), d.index, outcome, fmt_g6(d.margin));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// `x,y` rows; the metadata sidecar carries the axis labels and anything
/// the caller adds.
pub fn write_curve_csv(path: &Path, curve: &Curve) -> Result<()> {
    let mut out = String::from("x,y\n");
    for &(x, y) in curve.points() {
        let _ = writeln!(out, "{},{}", fmt_g6(x), fmt_g6(y));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn write_curve_meta(
    path: &Path,
    curve: &Curve,
    extra: serde_json::Value,
) -> Result<()> {
    let value = json!({
        "x_label": curve.x_label,
        "y_label": curve.y_label,
        "points": curve.len(),
        "extra": extra,
    });
    fs::write(path, serde_json::to_string_pretty(&value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

/// `word,count` rows for ranked pooling words.
pub fn write_ranked_words(path: &Path, words: &[(String, u64)]) -> Result<()> {
    let mut out = String::from("word,count\n");
    for (w, c) in words {
        let _ = writeln!(out, "{w},{c}");
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Reads the first CSV column back (skipping an optional `word,...`
/// header), or a plain word-per-line file.
pub fn read_ranked_words(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let first = line.split(',').next().unwrap_or("");
        if i == 0 && first == "word" {
            continue;
        }
        out.push(first.to_string());
    }
    Ok(out)
}
