//! File plumbing: atomic writes and small format helpers.

use std::path::Path;

use anyhow::{Context, Result};

/// Writes via a temporary file in the target directory plus an atomic
/// rename, so failures never leave a partial output behind.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir),
        None => tempfile::NamedTempFile::new_in("."),
    }
    .with_context(|| format!("creating temp file next to {}", path.display()))?;
    std::fs::write(tmp.path(), content)
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// SOURCE_DATE_EPOCH when set; otherwise absent, so reruns with the same
/// flags produce byte-identical output.
pub fn build_timestamp() -> Option<i64> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse().ok())
}
