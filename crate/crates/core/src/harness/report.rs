use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::ResolvedConfig;
use crate::error::Result;

/// Largest tolerated fraction of failed paths before the run is reported as a
/// numerical failure.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathFailure {
    pub path_index: usize,
    pub error: String,
}

/// Result of one experiment: a CSV table, per-path NDJSON records and a
/// summary, all tagged with the resolved config.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ResolvedConfig,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub records: Vec<(usize, Value)>,
    pub failures: Vec<PathFailure>,
    pub summary: Value,
}

pub fn float_cell(x: f64) -> String {
    format!("{x:e}")
}

impl ExperimentReport {
    pub fn new(config: ResolvedConfig, columns: &[&str]) -> Self {
        Self {
            config,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            records: Vec::new(),
            failures: Vec::new(),
            summary: Value::Null,
        }
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn n_attempted(&self) -> usize {
        self.records.len() + self.failures.len()
    }

    pub fn exceeds_failure_policy(&self) -> bool {
        let n = self.n_attempted();
        n > 0 && self.failures.len() as f64 > MAX_FAILURE_FRACTION * n as f64
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Header record with config and seed, then path records and failures in
    /// path order, then the summary.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        let header = json!({
            "record": "config",
            "experiment": self.config.experiment.name(),
            "seed": self.config.seed,
            "config": self.config,
        });
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        let mut lines: Vec<(usize, Value)> = self
            .records
            .iter()
            .map(|(i, v)| {
                let mut rec = json!({"record": "path", "path_index": i});
                if let (Some(obj), Value::Object(fields)) = (rec.as_object_mut(), v) {
                    obj.extend(fields.clone());
                } else {
                    rec["data"] = v.clone();
                }
                (*i, rec)
            })
            .collect();
        lines.extend(self.failures.iter().map(|f| {
            (
                f.path_index,
                json!({"record": "failure", "path_index": f.path_index, "error": f.error}),
            )
        }));
        lines.sort_by_key(|(i, _)| *i);
        for (_, l) in lines {
            writeln!(w, "{}", serde_json::to_string(&l)?)?;
        }
        let summary = json!({
            "record": "summary",
            "n_paths": self.n_attempted(),
            "n_failed": self.failures.len(),
            "summary": self.summary,
        });
        writeln!(w, "{}", serde_json::to_string(&summary)?)?;
        Ok(())
    }

    /// Writes `config.json`, `report.csv` and `report.ndjson` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut cfg = serde_json::to_string_pretty(&self.config)?;
        cfg.push('\n');
        fs::write(dir.join("config.json"), cfg)?;
        self.write_csv(BufWriter::new(fs::File::create(dir.join("report.csv"))?))?;
        let mut nd = BufWriter::new(fs::File::create(dir.join("report.ndjson"))?);
        self.write_ndjson(&mut nd)?;
        nd.flush()?;
        Ok(())
    }
}
