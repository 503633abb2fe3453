//! Seeded, reproducible sample batches with provenance metadata.
//!
//! A batch records the master seed, model metadata, and sampler statistics
//! alongside the draws themselves. Serialization targets are CSV (one row
//! per draw) and JSONL (a header record followed by one record per draw).
//! Numbers are written in shortest round-trip form so identical batches are
//! byte-identical across runs.

use crate::error::Result;
use serde_json::{json, Map, Value};
use std::io::Write;

/// Counters kept by the rejection/resample loops of a sampler.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct SamplerStats {
    /// Direction (or shape) proposals attempted.
    pub proposals: u64,
    /// Proposals accepted.
    pub accepted: u64,
    /// Draws discarded because they landed in the excluded null set.
    pub resampled: u64,
}

impl SamplerStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    pub fn resample_rate(&self) -> f64 {
        if self.accepted == 0 {
            0.0
        } else {
            self.resampled as f64 / self.accepted as f64
        }
    }
}

/// A collection of draws from one sampling model.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    seed: u64,
    meta: Map<String, Value>,
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
    stats: SamplerStats,
}

impl SampleBatch {
    /// `meta` carries model provenance (generator label, v label, shape, …);
    /// `columns` names the flattened coordinates of one draw.
    pub fn new(seed: u64, meta: Map<String, Value>, columns: Vec<String>) -> Self {
        Self { seed, meta, columns, rows: Vec::new(), stats: SamplerStats::default() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = Vec<f64>>) {
        for row in rows {
            self.push(row);
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn meta(&self) -> &Map<String, Value> {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut Map<String, Value> {
        &mut self.meta
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn stats(&self) -> SamplerStats {
        self.stats
    }

    pub fn stats_mut(&mut self) -> &mut SamplerStats {
        &mut self.stats
    }

    pub fn merge_stats(&mut self, other: SamplerStats) {
        self.stats.proposals += other.proposals;
        self.stats.accepted += other.accepted;
        self.stats.resampled += other.resampled;
    }

    /// CSV: a comment line with provenance, a header row, one row per draw.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# seed={} meta={}", self.seed, Value::Object(self.meta.clone()))?;
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let mut line = String::new();
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{v}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// JSONL: one header record, then one record per draw.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = self.meta.clone();
        header.insert("record".into(), json!("header"));
        header.insert("seed".into(), json!(self.seed));
        header.insert("count".into(), json!(self.rows.len()));
        header.insert("columns".into(), json!(self.columns));
        header.insert("stats".into(), serde_json::to_value(self.stats)?);
        writeln!(w, "{}", Value::Object(header))?;
        for row in &self.rows {
            writeln!(w, "{}", json!({ "x": row }))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn to_jsonl_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("jsonl output is utf-8"))
    }
}

/// Column labels x_1..x_n.
pub fn vector_columns(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x_{i}")).collect()
}

/// Column labels for an n×k matrix flattened row-major: x_11, x_12, …
pub fn matrix_columns(n: usize, k: usize) -> Vec<String> {
    let mut cols = Vec::with_capacity(n * k);
    for i in 1..=n {
        for j in 1..=k {
            cols.push(format!("x_{i}{j}"));
        }
    }
    cols
}
