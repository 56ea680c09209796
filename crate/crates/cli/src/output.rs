//! CSV tables and JSON metadata files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::CliError;

/// Round-trip decimal form with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Table {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl Table {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut t = Table {
            path: path.to_path_buf(),
            writer: csv::Writer::from_writer(BufWriter::new(file)),
        };
        t.writer
            .write_record(header)
            .map_err(|e| CliError::io(path, e))?;
        Ok(t)
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// Metadata file next to a CSV: same stem, `.json` extension.
pub fn sidecar(csv: &Path) -> Result<PathBuf, CliError> {
    if csv.extension().is_some_and(|e| e == "json") {
        return Err(CliError::config(
            "out",
            "the data file cannot have a .json extension; metadata goes next to it",
        ));
    }
    Ok(csv.with_extension("json"))
}

/// Top-level metadata shared by every command.
pub fn document(
    command: &str,
    seed: Option<u64>,
    config: Map<String, Value>,
) -> Map<String, Value> {
    let mut doc = Map::new();
    doc.insert("tool".into(), json!("mdiff"));
    doc.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    doc.insert("command".into(), json!(command));
    if let Some(seed) = seed {
        doc.insert("seed".into(), json!(seed));
    }
    doc.insert("config".into(), Value::Object(config));
    doc
}

pub fn write_json(path: &Path, doc: &Map<String, Value>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let digits = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(digits.len(), 17);
        }
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(
            sidecar(Path::new("a/b.csv")).unwrap(),
            Path::new("a/b.json")
        );
        assert_eq!(sidecar(Path::new("out")).unwrap(), Path::new("out.json"));
        assert!(sidecar(Path::new("x.json")).is_err());
    }
}
