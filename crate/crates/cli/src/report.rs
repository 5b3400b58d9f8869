//! Bundling of earlier outputs into one report.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

#[derive(Debug, Serialize)]
struct Entry {
    path: String,
    sha256: String,
    bytes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    json: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    csv_header: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    csv_rows: Option<usize>,
}

#[derive(Debug, Serialize)]
struct ReportBundle {
    tool: &'static str,
    version: &'static str,
    /// Seeds found in the bundled JSON files, by path.
    seeds: Vec<(String, u64)>,
    entries: Vec<Entry>,
}

fn collect_seeds(path: &str, v: &Value, out: &mut Vec<(String, u64)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                if k == "seed" {
                    if let Some(s) = x.as_u64() {
                        out.push((path.to_string(), s));
                    }
                }
                collect_seeds(path, x, out);
            }
        }
        Value::Array(xs) => xs.iter().for_each(|x| collect_seeds(path, x, out)),
        _ => {}
    }
}

fn leaves(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                leaves(&key, x, out);
            }
        }
        Value::Array(xs) => {
            for (i, x) in xs.iter().enumerate() {
                leaves(&format!("{prefix}[{i}]"), x, out);
            }
        }
        Value::Number(n) => out.push((prefix.to_string(), n.to_string())),
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
        _ => {}
    }
}

/// Write `bundle.json` and the long-format `bundle_long.csv` under `out`.
///
/// Files already under `out` are skipped. Returns the number of files bundled.
pub fn bundle(dir: &Path, out: &Path) -> Result<usize> {
    if !dir.is_dir() {
        return Err(kpp_core::Error::Config(format!("{} is not a directory", dir.display())).into());
    }
    let mut entries = Vec::new();
    let mut seeds = Vec::new();
    let mut long = Vec::new();
    let walker = WalkDir::new(dir).sort_by_file_name().into_iter().filter_entry(|e| e.path() != out);
    for ent in walker {
        let ent = ent?;
        if !ent.file_type().is_file() {
            continue;
        }
        let ext = ent.path().extension().and_then(|e| e.to_str()).unwrap_or("");
        if ext != "json" && ext != "csv" {
            continue;
        }
        let rel = ent.path().strip_prefix(dir).unwrap_or(ent.path()).to_string_lossy().replace('\\', "/");
        let bytes = std::fs::read(ent.path()).with_context(|| format!("reading {}", ent.path().display()))?;
        let sha256 = hex::encode(Sha256::digest(&bytes));
        let mut e = Entry { path: rel.clone(), sha256, bytes: bytes.len(), json: None, csv_header: None, csv_rows: None };
        if ext == "json" {
            let v: Value = serde_json::from_slice(&bytes).with_context(|| format!("parsing {rel}"))?;
            collect_seeds(&rel, &v, &mut seeds);
            let mut kv = Vec::new();
            leaves("", &v, &mut kv);
            long.extend(kv.into_iter().map(|(k, x)| (rel.clone(), k, x)));
            e.json = Some(v);
        } else {
            let mut r = csv::Reader::from_reader(bytes.as_slice());
            e.csv_header = Some(r.headers()?.iter().map(str::to_string).collect());
            e.csv_rows = Some(r.records().count());
        }
        entries.push(e);
    }
    let n = entries.len();
    let b = ReportBundle { tool: "kpplab", version: env!("CARGO_PKG_VERSION"), seeds, entries };
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("bundle.json"), serde_json::to_string_pretty(&b)? + "\n")?;
    let mut w = csv::Writer::from_path(out.join("bundle_long.csv"))?;
    w.write_record(["file", "key", "value"])?;
    for (f, k, v) in long {
        w.write_record([f, k, v])?;
    }
    w.flush()?;
    Ok(n)
}
