//! Writing trace CSVs and the run summary.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use amenable_sas::diagnostics::TraceRow;
use serde::Serialize;
use serde_json::{json, Value};
use tempfile::NamedTempFile;

use crate::run::RunSummary;

pub const SUMMARY_FILE: &str = "summary.json";

/// An I/O failure together with the file it concerns.
#[derive(Debug)]
pub struct EmitError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

impl fmt::Display for EmitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.source)
    }
}

impl std::error::Error for EmitError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EmitError + '_ {
    move |source| EmitError { path: path.to_path_buf(), source }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), EmitError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| EmitError { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

/// Serializes records with a header line.
pub fn csv_bytes<T: Serialize>(records: &[T]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn write_csv<T: Serialize>(path: &Path, records: &[T]) -> Result<(), EmitError> {
    let bytes = csv_bytes(records).map_err(|e| EmitError { path: path.to_path_buf(), source: e.into() })?;
    write_atomic(path, &bytes)
}

/// An empty trace still gets its header.
fn trace_bytes(rows: &[TraceRow]) -> Vec<u8> {
    if rows.is_empty() {
        return b"test,index,value,target,residual\n".to_vec();
    }
    csv_bytes(rows).expect("trace rows serialize")
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), EmitError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// The summary document. Wall-clock times are left out so reruns are byte-identical.
pub fn summary_json(summary: &RunSummary) -> Value {
    let tests: Vec<Value> = summary
        .tests
        .iter()
        .map(|t| {
            let mut obj = json!({"index": t.index, "label": t.label, "test": t.test});
            let map = obj.as_object_mut().expect("object");
            match &t.result {
                Ok(report) => {
                    map.insert("status".into(), json!("ok"));
                    map.insert("trace_file".into(), json!(format!("{}.csv", t.label)));
                    if let Value::Object(fields) = serde_json::to_value(report).expect("report serializes") {
                        map.extend(fields);
                    }
                }
                Err(e) => {
                    map.insert("status".into(), json!("error"));
                    map.insert("error".into(), json!(e));
                }
            }
            obj
        })
        .collect();
    json!({
        "schema_version": summary.schema_version,
        "seed": summary.seed,
        "seed_source": summary.seed_source,
        "seeds": summary.seeds,
        "completed": summary.completed(),
        "tests": tests,
    })
}

/// Writes one trace CSV per completed test and `summary.json` into `dir`,
/// returning the paths written.
pub fn emit(summary: &RunSummary, dir: &Path) -> Result<Vec<PathBuf>, EmitError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for t in &summary.tests {
        if let Ok(report) = &t.result {
            let path = dir.join(format!("{}.csv", t.label));
            write_atomic(&path, &trace_bytes(&report.rows))?;
            written.push(path);
        }
    }
    let path = dir.join(SUMMARY_FILE);
    write_json(&path, &summary_json(summary))?;
    written.push(path);
    Ok(written)
}
