//! Line-oriented report records shared by the command-line tools.
//!
//! A record is one line of space-separated `key=value` fields, opened by
//! `record=<kind>`. Field names are stable.

use std::fmt::{self, Write as _};

use crate::hw_model::CycleReport;

/// One line of `key=value` fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Record {
    fields: Vec<(String, String)>,
}

impl Record {
    pub fn new(kind: &str) -> Self {
        Record::default().field("record", kind)
    }

    pub fn field(mut self, key: &str, value: impl fmt::Display) -> Self {
        let mut v = value.to_string();
        if v.is_empty() || v.contains(char::is_whitespace) {
            v = format!("{v:?}");
        }
        self.fields.push((key.to_string(), v));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut line = String::new();
        for (i, (k, v)) in self.fields.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            write!(line, "{k}={v}")?;
        }
        f.write_str(&line)
    }
}

impl From<&CycleReport> for Record {
    fn from(r: &CycleReport) -> Self {
        Record::new("cycle_report")
            .field("mode", r.mode)
            .field("cycles", r.cycles)
            .field("time_seconds", r.time_seconds)
            .field("time_ms", r.time_ms())
            .field("truncated_nodes", r.truncated_nodes)
            .field("segments_used", r.segments_used)
    }
}

/// Measured software sampling time next to the modeled hardware time.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub dataset: String,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub software_ms: f64,
    pub hardware_ms: f64,
    pub speedup: f64,
}

impl BenchRecord {
    pub fn new(dataset: impl Into<String>, num_nodes: usize, num_edges: usize, software_ms: f64, hardware_ms: f64) -> Self {
        BenchRecord {
            dataset: dataset.into(),
            num_nodes,
            num_edges,
            software_ms,
            hardware_ms,
            speedup: software_ms / hardware_ms,
        }
    }
}

impl From<&BenchRecord> for Record {
    fn from(b: &BenchRecord) -> Self {
        Record::new("bench")
            .field("dataset", &b.dataset)
            .field("num_nodes", b.num_nodes)
            .field("num_edges", b.num_edges)
            .field("software_ms", b.software_ms)
            .field("hardware_ms", b.hardware_ms)
            .field("speedup", b.speedup)
            .field("speedup_note", "host-dependent")
    }
}

/// Median of `values`; the mean of the two middle values for even lengths.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    })
}
