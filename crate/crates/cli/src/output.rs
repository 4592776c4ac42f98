//! Deterministic CSV and JSON writers for command outputs.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes a header and rows of already formatted cells.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that reads back to the same value.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}{k}")).collect()
}

/// Column label for a quantile level, e.g. `q0.025`.
pub fn quantile_label(q: f64) -> String {
    format!("q{q}")
}
