//! Run configuration: JSON file + CLI overrides. Every command resolves its
//! full configuration up front and writes it next to its outputs, so a run
//! directory is always reproducible from its own config file.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use gen_lab_core::autodiff::write_atomic;

/// Global seed fallback when neither flag nor config file provides one.
pub const SEED_ENV: &str = "GEN_LAB_SEED";

pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = file {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .parse()
            .with_context(|| format!("{SEED_ENV} must be an unsigned integer, got {v:?}")),
        Err(_) => Ok(0),
    }
}

pub fn load_config_file<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let bytes =
                std::fs::read(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

/// Write the fully resolved configuration into the run directory.
pub fn write_resolved<T: Serialize>(dir: &Path, config: &T) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let bytes = serde_json::to_vec_pretty(config)?;
    write_atomic(&dir.join("config.json"), &bytes)
        .with_context(|| format!("writing resolved config under {}", dir.display()))?;
    Ok(())
}

pub fn ensure_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir)
            .with_context(|| format!("inspecting {}", dir.display()))?
            .next()
            .is_some();
        if non_empty && !force {
            bail!(
                "output directory {} is not empty (pass --force to overwrite)",
                dir.display()
            );
        }
    }
    Ok(())
}

/// Parse mesh sizes given as an inclusive range `2..5` / `2..=5` or an
/// explicit list `2,3,4,5`.
pub fn parse_mesh_sizes(text: &str) -> Result<Vec<usize>> {
    let text = text.trim();
    let range = text.split_once("..=").or_else(|| text.split_once(".."));
    if let Some((a, b)) = range {
        let lo: usize = a.trim().parse().context("bad mesh range start")?;
        let hi: usize = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .context("bad mesh range end")?;
        if hi < lo {
            bail!("empty mesh range {text:?}");
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .with_context(|| format!("bad mesh size {s:?}"))
        })
        .collect()
}
