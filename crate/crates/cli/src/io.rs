//! Versioned text files: the first line is always the schema string.

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs;
use std::path::Path;

pub const CAMPAIGN_SCHEMA: &str = "# grokking/campaign v1";
pub const CLAIMS_SCHEMA: &str = "# grokking/claims v1";
pub const GRID_SCHEMA: &str = "# grokking/bound-grid v1";
pub const RUN_CONFIG_SCHEMA: &str = "# grokking/run-config v1";
pub const SUMMARY_SCHEMA: &str = "# grokking/summary v1";
pub const MANIFEST_SCHEMA: &str = "# grokking/manifest v1";
pub const REPORT_SCHEMA: &str = "# grokking/report v1";
pub const VALUES_SCHEMA: &str = "# grokking/values v1";
pub const TABLE_SCHEMA: &str = "# grokking/table v1";
pub const TIMING_SCHEMA: &str = "# grokking/timing v1";

/// Writes through a temporary sibling and renames, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

pub fn write_versioned(path: &Path, schema: &str, body: &str) -> Result<()> {
    let mut text = String::with_capacity(schema.len() + body.len() + 2);
    text.push_str(schema);
    text.push('\n');
    text.push_str(body);
    if !body.ends_with('\n') {
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// Checks the schema line and returns the whole text (schema lines are comments in every format we use).
pub fn check_schema<'a>(text: &'a str, schema: &str, what: &str) -> Result<&'a str> {
    let first = text.lines().next().unwrap_or("").trim_end();
    if first != schema {
        bail!("{what}: expected first line {schema:?}, found {first:?}");
    }
    Ok(text)
}

pub fn read_versioned(path: &Path, schema: &str) -> Result<String> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    check_schema(&text, schema, &path.display().to_string())?;
    Ok(text)
}

pub fn write_json<T: Serialize>(path: &Path, schema: &str, value: &T) -> Result<()> {
    write_versioned(path, schema, &serde_json::to_string_pretty(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<T> {
    let text = read_versioned(path, schema)?;
    let body = text.split_once('\n').map_or("", |(_, b)| b);
    serde_json::from_str(body).with_context(|| format!("parsing {}", path.display()))
}
