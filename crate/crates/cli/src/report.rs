//! Report assembly: one JSON summary plus CSV detail files per experiment.
//! Everything is buffered in memory and written only on success, so a failed
//! run leaves no partial outputs. Reruns with identical config and seed are
//! byte-identical (reports carry no timestamps or machine state).

use std::io::Write;
use std::path::{Path, PathBuf};

pub struct ReportBundle {
    pub experiment: String,
    pub summary: serde_json::Value,
    pub csvs: Vec<(String, String)>,
    pub jsons: Vec<(String, serde_json::Value)>,
}

impl ReportBundle {
    pub fn new(experiment: &str, summary: serde_json::Value) -> Self {
        ReportBundle {
            experiment: experiment.to_string(),
            summary,
            csvs: Vec::new(),
            jsons: Vec::new(),
        }
    }

    pub fn add_csv(&mut self, name: &str, content: String) {
        self.csvs.push((name.to_string(), content));
    }

    pub fn add_json(&mut self, name: &str, value: serde_json::Value) {
        self.jsons.push((name.to_string(), value));
    }

    /// Writes summary and CSVs; on any failure removes files written so far.
    pub fn write(&self, out_dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(out_dir)?;
        let mut written: Vec<PathBuf> = Vec::new();
        let emit = |name: String, bytes: &[u8], written: &mut Vec<PathBuf>| -> std::io::Result<()> {
            let path = out_dir.join(name);
            let mut f = std::fs::File::create(&path)?;
            f.write_all(bytes)?;
            written.push(path);
            Ok(())
        };
        let summary_name = format!("{}-summary.json", self.experiment);
        let mut pretty = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        pretty.push('\n');
        let mut result = emit(summary_name, pretty.as_bytes(), &mut written);
        if result.is_ok() {
            for (name, content) in &self.csvs {
                result = emit(
                    format!("{}-{}.csv", self.experiment, name),
                    content.as_bytes(),
                    &mut written,
                );
                if result.is_err() {
                    break;
                }
            }
        }
        if result.is_ok() {
            for (name, value) in &self.jsons {
                let mut text = serde_json::to_string_pretty(value).expect("json serializes");
                text.push('\n');
                result = emit(
                    format!("{}-{}.json", self.experiment, name),
                    text.as_bytes(),
                    &mut written,
                );
                if result.is_err() {
                    break;
                }
            }
        }
        if let Err(e) = result {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            return Err(e);
        }
        Ok(written)
    }
}

/// Minimal RFC-4180-style CSV: header row, dot decimal separator, fields
/// quoted only when they contain a comma, quote, or newline.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let quote = |s: &str| -> String {
        if s.contains(',') || s.contains('"') || s.contains('\n') {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.to_string()
        }
    };
    let mut out = String::new();
    out.push_str(&header.iter().map(|h| quote(h)).collect::<Vec<_>>().join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.iter().map(|f| quote(f)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// Shortest-roundtrip float formatting (Rust's default Display for f64).
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_only_when_needed() {
        let t = csv_table(
            &["a", "b"],
            &[vec!["1.5".into(), "x,y".into()], vec!["inf".into(), "plain".into()]],
        );
        assert_eq!(t, "a,b\n1.5,\"x,y\"\ninf,plain\n");
    }

    #[test]
    fn bundle_roundtrip_and_cleanup() {
        let dir = std::env::temp_dir().join("hmlab-report-test");
        let _ = std::fs::remove_dir_all(&dir);
        let mut b = ReportBundle::new("demo", serde_json::json!({"x": 1}));
        b.add_csv("rows", "a\n1\n".into());
        let files = b.write(&dir).unwrap();
        assert_eq!(files.len(), 2);
        for f in files {
            assert!(f.exists());
        }
        let _ = std::fs::remove_dir_all(&dir);
    }
}
