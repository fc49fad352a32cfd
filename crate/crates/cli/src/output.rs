//! Output file helpers: atomic writes and config-stamped file bodies.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Writes a file atomically: the content lands under a temporary name in the
/// target directory and is renamed into place, so readers never observe a
/// partial file.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create temp file in {}", dir.display()))?;
    std::fs::write(tmp.path(), content)
        .with_context(|| format!("cannot write {}", tmp.path().display()))?;
    tmp.persist(path)
        .with_context(|| format!("cannot move output into {}", path.display()))?;
    Ok(())
}

/// Prefixes CSV content with comment lines carrying the resolved config and
/// seed, so every output file is self-describing.
pub fn stamped_csv(config: &ExperimentConfig, body: &str) -> Result<String> {
    let echo = serde_json::to_string(config).context("config serialization")?;
    Ok(format!("# config: {echo}\n# seed: {}\n{body}", config.seed))
}

/// Serializes a report that embeds the resolved config.
pub fn stamped_json<T: Serialize>(config: &ExperimentConfig, label: &str, payload: &T) -> Result<String> {
    #[derive(Serialize)]
    struct Stamped<'a, T> {
        command: &'a str,
        seed: u64,
        config: &'a ExperimentConfig,
        #[serde(flatten)]
        payload: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Stamped {
        command: label,
        seed: config.seed,
        config,
        payload,
    })
    .context("report serialization")?;
    s.push('\n');
    Ok(s)
}
