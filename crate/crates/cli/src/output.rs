//! Manifest, JSON and CSV emission, atomic file writes.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

/// Echoed under `"manifest"` in every JSON document.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub flags: Value,
    pub seed: u64,
    pub version: String,
    pub timestamp: String,
    pub tolerance: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, flags: &impl Serialize, seed: u64, tolerance: f64) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            flags: serde_json::to_value(flags).expect("flags serialize"),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            tolerance,
        }
    }
}

/// `{"manifest": …, …body}`; the body must serialize to an object.
pub fn with_manifest(manifest: &RunManifest, body: &impl Serialize) -> Value {
    let mut doc = Map::new();
    doc.insert("manifest".into(), serde_json::to_value(manifest).expect("manifest serializes"));
    match serde_json::to_value(body).expect("body serializes") {
        Value::Object(fields) => doc.extend(fields),
        other => {
            doc.insert("result".into(), other);
        }
    }
    Value::Object(doc)
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Writes to `path` via a temporary file in the same directory and a rename,
/// or to standard output when `path` is `None`.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> io::Result<()> {
    match path {
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(path).map_err(|e| e.error)?;
            Ok(())
        }
    }
}

pub fn json_bytes(doc: &Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(doc).expect("JSON encodes");
    bytes.push(b'\n');
    bytes
}

/// CSV with a header row; fields are quoted as RFC 4180 requires.
pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| e.into_error())
}
