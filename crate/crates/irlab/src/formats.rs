//! The retrieval file formats: corpus and topics (tab-separated), TREC
//! qrels and runs, training triples, and vocabulary listings. Parsers
//! report the offending line number; writers emit deterministic bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use irlab_core::text::Qrels;

/// `docid<TAB>text`, one document per line.
pub fn parse_corpus(path: &Path) -> Result<Vec<(String, String)>> {
    parse_tabbed(path, "corpus")
}

/// `qid<TAB>text`, one topic per line.
pub fn parse_topics(path: &Path) -> Result<Vec<(String, String)>> {
    parse_tabbed(path, "topics")
}

fn parse_tabbed(path: &Path, what: &str) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {what} file {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, body) = line.split_once('\t').ok_or_else(|| {
            anyhow!("{}:{}: expected `id<TAB>text`", path.display(), i + 1)
        })?;
        if id.is_empty() {
            bail!("{}:{}: empty id", path.display(), i + 1);
        }
        out.push((id.to_string(), body.to_string()));
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, docs: &[(String, Vec<String>)]) -> Result<()> {
    let mut out = String::new();
    for (id, tokens) in docs {
        out.push_str(id);
        out.push('\t');
        out.push_str(&tokens.join(" "));
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// TREC 4-column qrels: `qid 0 docid grade`, whitespace separated.
pub fn parse_qrels(path: &Path) -> Result<Qrels> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading qrels {}", path.display()))?;
    let mut qrels = Qrels::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            bail!(
                "{}:{}: expected 4 fields `qid 0 docid grade`, got {}",
                path.display(),
                i + 1,
                fields.len()
            );
        }
        let grade: u32 = fields[3].parse().map_err(|_| {
            anyhow!("{}:{}: grade {:?} is not a nonnegative integer", path.display(), i + 1, fields[3])
        })?;
        qrels.insert(fields[0], fields[2], grade);
    }
    Ok(qrels)
}

pub fn write_qrels(path: &Path, qrels: &Qrels) -> Result<()> {
    let mut out = String::new();
    for (qid, did, grade) in qrels.iter() {
        let _ = writeln!(out, "{qid} 0 {did} {grade}");
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// One entry of a TREC run file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query_id: String,
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// TREC 6-column run: `qid Q0 docid rank score tag`.
pub fn parse_run(path: &Path) -> Result<Vec<RunEntry>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading run {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            bail!(
                "{}:{}: expected 6 fields `qid Q0 docid rank score tag`, got {}",
                path.display(),
                i + 1,
                fields.len()
            );
        }
        let rank: usize = fields[3]
            .parse()
            .map_err(|_| anyhow!("{}:{}: bad rank {:?}", path.display(), i + 1, fields[3]))?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| anyhow!("{}:{}: bad score {:?}", path.display(), i + 1, fields[4]))?;
        out.push(RunEntry {
            query_id: fields[0].to_string(),
            doc_id: fields[2].to_string(),
            rank,
            score,
            tag: fields[5].to_string(),
        });
    }
    Ok(out)
}

pub fn write_run(path: &Path, run: &[RunEntry]) -> Result<()> {
    let mut out = String::new();
    for e in run {
        let _ = writeln!(
            out,
            "{} Q0 {} {} {} {}",
            e.query_id,
            e.doc_id,
            e.rank,
            fmt_g6(e.score),
            e.tag
        );
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// `qid<TAB>docid_pos<TAB>docid_neg` training triples.
pub fn parse_triples(path: &Path) -> Result<Vec<(String, String, String)>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading triples {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            bail!(
                "{}:{}: expected `qid<TAB>docid_pos<TAB>docid_neg`",
                path.display(),
                i + 1
            );
        }
        out.push((fields[0].to_string(), fields[1].to_string(), fields[2].to_string()));
    }
    Ok(out)
}

pub fn write_triples(path: &Path, triples: &[(String, String, String)]) -> Result<()> {
    let mut out = String::new();
    for (q, p, n) in triples {
        let _ = writeln!(out, "{q}\t{p}\t{n}");
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// One token per line; the line index is the token id (line 0 is the
/// reserved OOV slot).
pub fn write_vocab_listing(path: &Path, tokens: &[String]) -> Result<()> {
    let mut out = String::new();
    for t in tokens {
        out.push_str(t);
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn parse_vocab_listing(path: &Path) -> Result<Vec<String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading vocab {}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Formats a float with six significant digits, shortest form: the fixed
/// notation for exponents in `[-4, 5]`, exponential outside. All CSV and
/// run-file floats route through this so reruns are byte-identical.
pub fn fmt_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let formatted = format!("{x:.5e}");
    let (mantissa, exponent) = formatted.split_once('e').expect("exponential form");
    let exponent: i32 = exponent.parse().expect("numeric exponent");
    if (-4..6).contains(&exponent) {
        let decimals = (5 - exponent).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        let trimmed = if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.')
        } else {
            fixed.as_str()
        };
        if trimmed == "-0" {
            "0".to_string()
        } else {
            trimmed.to_string()
        }
    } else {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}e{exponent}")
    }
}
