use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

use crate::ExportArgs;

/// Writes `metrics.jsonl` as CSV. Columns follow the key order of the first
/// record; keys first seen later are appended. Missing values are blank.
pub fn export_metrics(a: &ExportArgs) -> Result<()> {
    let src = a.run.join("metrics.jsonl");
    let rows: Vec<serde_json::Map<String, Value>> = raro_core::io::read_jsonl(&src)?;
    let mut columns: Vec<String> = Vec::new();
    for row in &rows {
        for k in row.keys() {
            if !columns.contains(k) {
                columns.push(k.clone());
            }
        }
    }
    let out = a.out.clone().unwrap_or_else(|| a.run.join("metrics.csv"));
    write_csv(&out, &columns, &rows).with_context(|| format!("writing {}", out.display()))?;
    println!("{}", out.display());
    Ok(())
}

fn write_csv(out: &Path, columns: &[String], rows: &[serde_json::Map<String, Value>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns)?;
    for row in rows {
        w.write_record(columns.iter().map(|c| match row.get(c) {
            None | Some(Value::Null) => String::new(),
            Some(Value::String(s)) => s.clone(),
            Some(v) => v.to_string(),
        }))?;
    }
    raro_core::io::write_atomic(out, &w.into_inner()?)?;
    Ok(())
}
