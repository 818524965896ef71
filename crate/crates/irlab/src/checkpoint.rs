//! Model checkpoints: one text file of named tensors plus a JSON sidecar
//! describing the architecture, so a model directory is self-contained
//! (`checkpoint.txt`, `model.json`, `vocab.txt`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use irlab_core::matchers::{IntConfig, IntModel, Matcher, RepConfig, RepModel, SimilarityKind};
use irlab_core::tensor::{ParamStore, Tensor};

/// `name<TAB>shape(comma-separated)<TAB>values(space-separated)` per line,
/// nine significant digits per value.
pub fn write_store(path: &Path, store: &ParamStore) -> Result<()> {
    let mut out = String::new();
    for (_, param) in store.iter() {
        out.push_str(&param.name);
        out.push('\t');
        let shape: Vec<String> = param.value.shape().iter().map(|d| d.to_string()).collect();
        out.push_str(&shape.join(","));
        out.push('\t');
        let mut first = true;
        for v in param.value.data() {
            if !first {
                out.push(' ');
            }
            let _ = write!(out, "{v:.8e}");
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Parses a checkpoint, validating that value counts match the declared
/// shapes.
pub fn read_store(path: &Path) -> Result<ParamStore> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading checkpoint {}", path.display()))?;
    let mut store = ParamStore::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (name, shape, values) = match (fields.next(), fields.next(), fields.next()) {
            (Some(n), Some(s), Some(v)) if fields.next().is_none() => (n, s, v),
            _ => bail!(
                "{}:{}: expected `name<TAB>shape<TAB>values`",
                path.display(),
                i + 1
            ),
        };
        let shape: Vec<usize> = shape
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| anyhow!("{}:{}: bad dimension {s:?}", path.display(), i + 1))
            })
            .collect::<Result<_>>()?;
        let data: Vec<f64> = values
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| anyhow!("{}:{}: bad value {s:?}", path.display(), i + 1))
            })
            .collect::<Result<_>>()?;
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            bail!(
                "{}:{}: tensor {name:?} declares shape {shape:?} ({expected} values) but carries {}",
                path.display(),
                i + 1,
                data.len()
            );
        }
        store
            .add(name, Tensor::new(shape, data))
            .map_err(|e| anyhow!("{}:{}: {e}", path.display(), i + 1))?;
    }
    Ok(store)
}

/// Architecture sidecar. `model` is `"rep"` or `"int"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub model: String,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub channels: usize,
    pub hidden: usize,
    pub max_doc_len: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row_pooling: Option<bool>,
}

/// `dot`, `cosine`, or `gaussian:<sigma>`.
pub fn similarity_to_string(kind: SimilarityKind) -> String {
    match kind {
        SimilarityKind::Dot => "dot".to_string(),
        SimilarityKind::Cosine => "cosine".to_string(),
        SimilarityKind::Gaussian { sigma } => format!("gaussian:{sigma}"),
    }
}

pub fn similarity_from_string(s: &str) -> Result<SimilarityKind> {
    match s {
        "dot" => Ok(SimilarityKind::Dot),
        "cosine" => Ok(SimilarityKind::Cosine),
        other => {
            if let Some(sigma) = other.strip_prefix("gaussian:") {
                let sigma: f64 = sigma
                    .parse()
                    .map_err(|_| anyhow!("bad gaussian sigma in {other:?}"))?;
                if sigma <= 0.0 {
                    bail!("gaussian sigma must be positive, got {sigma}");
                }
                Ok(SimilarityKind::Gaussian { sigma })
            } else {
                bail!("unknown similarity {other:?} (expected dot, cosine, gaussian:<sigma>)")
            }
        }
    }
}

/// Either matcher family behind one loading surface.
pub enum AnyModel {
    Rep(RepModel),
    Int(IntModel),
}

pub fn save_model(dir: &Path, model: &AnyModel, vocab_tokens: &[String]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (store, meta) = match model {
        AnyModel::Rep(m) => (
            m.store(),
            ModelMeta {
                model: "rep".to_string(),
                vocab_size: m.vocab_size(),
                embed_dim: m.config().embed_dim,
                channels: m.config().channels,
                hidden: m.config().hidden,
                max_doc_len: m.config().max_doc_len,
                widths: Some(m.config().widths.clone()),
                kernel: None,
                grid: None,
                similarity: None,
                row_pooling: None,
            },
        ),
        AnyModel::Int(m) => (
            m.store(),
            ModelMeta {
                model: "int".to_string(),
                vocab_size: m.vocab_size(),
                embed_dim: m.config().embed_dim,
                channels: m.config().channels,
                hidden: m.config().hidden,
                max_doc_len: m.config().max_doc_len,
                widths: None,
                kernel: Some(m.config().kernel),
                grid: Some([m.config().grid.0, m.config().grid.1]),
                similarity: Some(similarity_to_string(m.config().similarity)),
                row_pooling: Some(m.config().row_pooling),
            },
        ),
    };
    write_store(&dir.join("checkpoint.txt"), store)?;
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(dir.join("model.json"), json + "\n")?;
    crate::formats::write_vocab_listing(&dir.join("vocab.txt"), vocab_tokens)?;
    Ok(())
}

/// Loads a model directory; returns the model and its vocabulary listing.
pub fn load_model(dir: &Path) -> Result<(AnyModel, Vec<String>)> {
    let meta: ModelMeta = serde_json::from_str(
        &fs::read_to_string(dir.join("model.json"))
            .with_context(|| format!("reading {}", dir.join("model.json").display()))?,
    )
    .context("parsing model.json")?;
    let store = read_store(&dir.join("checkpoint.txt"))?;
    let vocab = crate::formats::parse_vocab_listing(&dir.join("vocab.txt"))?;
    if vocab.len() != meta.vocab_size {
        bail!(
            "vocab.txt lists {} tokens but model.json declares {}",
            vocab.len(),
            meta.vocab_size
        );
    }
    let model = match meta.model.as_str() {
        "rep" => {
            let config = RepConfig {
                embed_dim: meta.embed_dim,
                channels: meta.channels,
                widths: meta.widths.clone().ok_or_else(|| anyhow!("rep model needs widths"))?,
                hidden: meta.hidden,
                max_doc_len: meta.max_doc_len,
            };
            AnyModel::Rep(RepModel::from_parts(meta.vocab_size, config, store))
        }
        "int" => {
            let grid = meta.grid.ok_or_else(|| anyhow!("int model needs grid"))?;
            let config = IntConfig {
                embed_dim: meta.embed_dim,
                channels: meta.channels,
                kernel: meta.kernel.ok_or_else(|| anyhow!("int model needs kernel"))?,
                grid: (grid[0], grid[1]),
                hidden: meta.hidden,
                similarity: similarity_from_string(
                    meta.similarity.as_deref().unwrap_or("cosine"),
                )?,
                row_pooling: meta.row_pooling.unwrap_or(false),
                max_doc_len: meta.max_doc_len,
            };
            AnyModel::Int(IntModel::from_parts(meta.vocab_size, config, store))
        }
        other => bail!("unknown model kind {other:?}"),
    };
    Ok((model, vocab))
}
