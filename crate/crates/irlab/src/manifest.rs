//! Every output directory carries a `manifest.json` naming the command,
//! the resolved configuration and its hash, the seed, and the tool
//! version. The manifest is the only output file holding a timestamp;
//! everything else is byte-identical across reruns.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde_json::json;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn write_manifest(
    dir: &Path,
    command: &str,
    seed: u64,
    config: serde_json::Value,
) -> Result<()> {
    let config_text = serde_json::to_string(&config)?;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = json!({
        "command": command,
        "seed": seed,
        "config": config,
        "config_hash": format!("{:016x}", fnv1a64(config_text.as_bytes())),
        "version": env!("CARGO_PKG_VERSION"),
        "created_unix": created,
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing manifest in {}", dir.display()))
}
