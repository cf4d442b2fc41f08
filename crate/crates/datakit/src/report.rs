//! Flat key-value report documents and the metrics table built from them.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde_json::{Map, Value};

/// One run's report: a flat JSON object, one key per metric or
/// hyperparameter, so tables can be regenerated from report files alone.
#[derive(Debug, Clone, Default)]
pub struct Report {
    entries: BTreeMap<String, Value>,
}

impl Report {
    pub fn new(algorithm: &str) -> Self {
        let mut r = Self::default();
        r.set_str("algorithm", algorithm);
        r
    }

    pub fn set_str(&mut self, key: &str, value: &str) {
        self.entries.insert(key.into(), Value::String(value.into()));
    }

    pub fn set_f64(&mut self, key: &str, value: f64) {
        let v = serde_json::Number::from_f64(value)
            .map(Value::Number)
            .unwrap_or(Value::Null);
        self.entries.insert(key.into(), v);
    }

    pub fn set_u64(&mut self, key: &str, value: u64) {
        self.entries.insert(key.into(), Value::from(value));
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).and_then(Value::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.entries.get(key).and_then(Value::as_f64)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> anyhow::Result<()> {
        let map: Map<String, Value> = self
            .entries
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let text = serde_json::to_string_pretty(&Value::Object(map))?;
        std::fs::write(path.as_ref(), text)
            .with_context(|| format!("writing report {}", path.as_ref().display()))?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .with_context(|| format!("reading report {}", path.as_ref().display()))?;
        let value: Value = serde_json::from_str(&text)?;
        let Value::Object(map) = value else {
            anyhow::bail!("report {} is not a flat object", path.as_ref().display());
        };
        Ok(Self {
            entries: map.into_iter().collect(),
        })
    }
}

/// Renders the benchmark table (Algorithm | RRMSE | RMPE | CPU) from a set
/// of reports, in the given order.
pub fn render_table(reports: &[Report]) -> String {
    let mut rows = vec![[
        "Algorithm".to_string(),
        "RRMSE".to_string(),
        "RMPE".to_string(),
        "CPU (s)".to_string(),
    ]];
    for r in reports {
        let fmt_pct = |key: &str| -> String {
            match r.get_f64(key) {
                Some(v) => format!("{:.2}%", v * 100.0),
                None => r.get_str(key).unwrap_or("-").to_string(),
            }
        };
        let cpu = r
            .get_f64("cpu_seconds")
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "-".into());
        rows.push([
            r.get_str("algorithm").unwrap_or("?").to_string(),
            fmt_pct("rrmse"),
            fmt_pct("rmpe"),
            cpu,
        ]);
    }
    let widths: Vec<usize> = (0..4)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 6));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let mut r = Report::new("smm-mnmf");
        r.set_f64("rrmse", 0.0515);
        r.set_u64("rank", 4);
        r.write(&p).unwrap();
        let back = Report::read(&p).unwrap();
        assert_eq!(back.get_str("algorithm"), Some("smm-mnmf"));
        assert_eq!(back.get_f64("rrmse"), Some(0.0515));
        assert_eq!(back.get_f64("rank"), Some(4.0));
    }

    #[test]
    fn table_contains_all_rows_and_marks_missing_metrics() {
        let mut a = Report::new("smm-mnmf");
        a.set_f64("rrmse", 0.0515);
        a.set_f64("rmpe", 0.0763);
        a.set_f64("cpu_seconds", 12.5);
        let mut b = Report::new("rfr");
        b.set_str("rrmse", "not built");
        let table = render_table(&[a, b]);
        assert!(table.contains("smm-mnmf") && table.contains("5.15%"));
        assert!(table.contains("rfr") && table.contains("not built"));
    }
}
