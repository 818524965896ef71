//! Experiment configuration: JSON files with unknown keys rejected, flags
//! taking precedence over file keys, and `IRLAB_SEED` as the seed of last
//! resort.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};

/// Keys a `train` config file may set. Command-line flags override any of
/// them; `seed` must come from somewhere (flag, file, or `IRLAB_SEED`).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainFileConfig {
    pub seed: Option<u64>,
    pub model: Option<String>,
    pub corpus: Option<PathBuf>,
    pub topics: Option<PathBuf>,
    pub triples: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub rate: Option<f64>,
    pub margin: Option<f64>,
    pub batch: Option<usize>,
    pub optimizer: Option<String>,
    pub similarity: Option<String>,
    pub row_pooling: Option<bool>,
    pub max_len: Option<usize>,
    pub embed_dim: Option<usize>,
    pub channels: Option<usize>,
    pub hidden: Option<usize>,
    pub min_count: Option<u64>,
}

impl TrainFileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Environment variable consulted when neither flag nor config carries a
/// seed.
pub const SEED_ENV: &str = "IRLAB_SEED";

/// Seed precedence: command-line flag, then config file, then `IRLAB_SEED`.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .parse()
            .map_err(|_| anyhow!("{SEED_ENV}={text:?} is not a valid seed")),
        Err(_) => Err(anyhow!(
            "no seed given: pass --seed, set it in the config, or export {SEED_ENV}"
        )),
    }
}
