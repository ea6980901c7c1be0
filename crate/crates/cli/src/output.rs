use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Writes artifacts into the output directory and echoes JSON records to
/// stdout, one per line.
pub struct Artifacts {
    dir: PathBuf,
    deterministic: bool,
}

impl Artifacts {
    pub fn new(dir: PathBuf, deterministic: bool) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Artifacts { dir, deterministic })
    }

    /// Adds a `timestamp` field unless running deterministically.
    pub fn stamp(&self, mut record: Map<String, Value>) -> Value {
        if !self.deterministic {
            let now = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            record.insert("timestamp".into(), now.into());
        }
        Value::Object(record)
    }

    /// Wall time in seconds, or `None` when running deterministically.
    pub fn wall(&self, seconds: f64) -> Option<f64> {
        (!self.deterministic).then_some(seconds)
    }

    pub fn jsonl(&self, name: &str, records: &[Value]) -> Result<(), CliError> {
        let mut text = String::new();
        for r in records {
            let line = serde_json::to_string(r).map_err(|e| CliError::Io(e.to_string()))?;
            println!("{line}");
            text.push_str(&line);
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    pub fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut f = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        f.write_all(bytes)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

/// Builds a JSON object from `(key, value)` pairs.
pub fn record<const N: usize>(fields: [(&str, Value); N]) -> Map<String, Value> {
    fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Joins coordinates with `;` so a point fits in one CSV cell.
pub fn join_point(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}
