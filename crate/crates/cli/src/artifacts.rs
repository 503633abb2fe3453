//! Artifact writers.  Every file this CLI emits embeds the configuration
//! hash and the master seed, so a result can always be traced back to the
//! exact inputs that produced it.

use ginv_core::Result;
use serde_json::{Map, Value};
use std::fs;
use std::path::{Path, PathBuf};

/// Ensure `out_dir` exists and return the path of an artifact inside it.
pub fn artifact_path(out_dir: &str, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    Ok(Path::new(out_dir).join(name))
}

/// Write a JSON artifact as `{config_sha256, seed, report}`.  The uniform
/// wrapper keeps provenance keys from colliding with report fields (some
/// reports carry derived sub-seeds of their own).
pub fn write_json(path: &Path, config_sha256: &str, seed: u64, body: Value) -> Result<()> {
    let mut top = Map::new();
    top.insert("config_sha256".into(), Value::String(config_sha256.into()));
    top.insert("seed".into(), Value::from(seed));
    top.insert("report".into(), body);
    let text = serde_json::to_string_pretty(&Value::Object(top))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Write tabular text (CSV with optional leading `#` comments) behind a
/// provenance comment line.
pub fn write_table(path: &Path, config_sha256: &str, seed: u64, content: &str) -> Result<()> {
    let text = format!("# config_sha256={config_sha256} seed={seed}\n{content}");
    fs::write(path, text)?;
    Ok(())
}

/// Format one CSV row of f64 values with shortest round-trip formatting.
pub fn csv_row(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn json_artifact_embeds_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_json(&path, "abc123", 7, json!({"x": 1, "seed": 99})).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["config_sha256"], "abc123");
        assert_eq!(v["seed"], 7);
        assert_eq!(v["report"]["x"], 1);
        assert_eq!(v["report"]["seed"], 99, "report-internal seeds stay intact");
    }

    #[test]
    fn table_artifact_embeds_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_table(&path, "beef", 9, "a,b\n1,2\n").unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config_sha256=beef seed=9\n"));
        assert!(text.ends_with("a,b\n1,2\n"));
    }

    #[test]
    fn csv_row_is_shortest_roundtrip() {
        let row = csv_row(&[0.1, 1.0 / 3.0, -2.5e-300]);
        for (text, orig) in row.split(',').zip([0.1, 1.0 / 3.0, -2.5e-300]) {
            assert_eq!(text.parse::<f64>().unwrap(), orig);
        }
    }
}
