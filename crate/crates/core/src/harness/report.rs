//! Table rendering with the row-best/column-best marking conventions:
//! bold marks the best architecture for a backend (row), underline marks the
//! best backend for an architecture (column); ties mark every maximum.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<ReportFormat> {
        match s {
            "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Config(format!("unknown report format '{other}'"))),
        }
    }
}

/// One metric over a (backend row) x (architecture column) grid. Cells may
/// be absent; absent cells render as "-" and never win a mark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub metric: String,
    pub row_keys: Vec<String>,
    pub col_keys: Vec<String>,
    pub values: BTreeMap<String, BTreeMap<String, f64>>,
}

impl MetricTable {
    pub fn new(metric: impl Into<String>) -> MetricTable {
        MetricTable {
            metric: metric.into(),
            row_keys: Vec::new(),
            col_keys: Vec::new(),
            values: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, row: &str, col: &str, value: f64) {
        if !self.row_keys.iter().any(|r| r == row) {
            self.row_keys.push(row.to_string());
        }
        if !self.col_keys.iter().any(|c| c == col) {
            self.col_keys.push(col.to_string());
        }
        self.values.entry(row.to_string()).or_default().insert(col.to_string(), value);
    }

    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        self.values.get(row).and_then(|cols| cols.get(col)).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.values.values().all(|cols| cols.is_empty())
    }

    /// Reorders the columns to match `order`; columns not listed keep their
    /// current relative order at the end.
    pub fn reorder_cols(&mut self, order: &[String]) {
        let mut reordered: Vec<String> =
            order.iter().filter(|c| self.col_keys.contains(c)).cloned().collect();
        for col in &self.col_keys {
            if !reordered.contains(col) {
                reordered.push(col.clone());
            }
        }
        self.col_keys = reordered;
    }

    /// Cells holding their row's maximum (all of them on ties).
    pub fn row_best(&self) -> BTreeSet<(String, String)> {
        let mut best = BTreeSet::new();
        for row in &self.row_keys {
            let max = self
                .col_keys
                .iter()
                .filter_map(|c| self.get(row, c))
                .fold(f64::NEG_INFINITY, f64::max);
            for col in &self.col_keys {
                if self.get(row, col) == Some(max) {
                    best.insert((row.clone(), col.clone()));
                }
            }
        }
        best
    }

    /// Cells holding their column's maximum (all of them on ties).
    pub fn col_best(&self) -> BTreeSet<(String, String)> {
        let mut best = BTreeSet::new();
        for col in &self.col_keys {
            let max = self
                .row_keys
                .iter()
                .filter_map(|r| self.get(r, col))
                .fold(f64::NEG_INFINITY, f64::max);
            for row in &self.row_keys {
                if self.get(row, col) == Some(max) {
                    best.insert((row.clone(), col.clone()));
                }
            }
        }
        best
    }
}

/// Renders the table with values at 4 decimal places. Markdown wraps
/// row-best cells in `**` and column-best cells in `<u>`; CSV carries the
/// raw values plus row_best/col_best boolean columns.
pub fn emit_report(table: &MetricTable, format: ReportFormat) -> Result<String> {
    if table.is_empty() {
        return Err(Error::Validation(format!("{} table is empty", table.metric)));
    }
    let row_best = table.row_best();
    let col_best = table.col_best();
    match format {
        ReportFormat::Markdown => {
            let mut out = String::new();
            out.push_str(&format!("| {} |", table.metric));
            for col in &table.col_keys {
                out.push_str(&format!(" {col} |"));
            }
            out.push('\n');
            out.push_str("|---|");
            for _ in &table.col_keys {
                out.push_str("---|");
            }
            out.push('\n');
            for row in &table.row_keys {
                out.push_str(&format!("| {row} |"));
                for col in &table.col_keys {
                    let cell = match table.get(row, col) {
                        None => "-".to_string(),
                        Some(v) => {
                            let key = (row.clone(), col.clone());
                            let mut text = format!("{v:.4}");
                            if row_best.contains(&key) {
                                text = format!("**{text}**");
                            }
                            if col_best.contains(&key) {
                                text = format!("<u>{text}</u>");
                            }
                            text
                        }
                    };
                    out.push_str(&format!(" {cell} |"));
                }
                out.push('\n');
            }
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut out = String::from("metric,row,col,value,row_best,col_best\n");
            for row in &table.row_keys {
                for col in &table.col_keys {
                    if let Some(v) = table.get(row, col) {
                        let key = (row.clone(), col.clone());
                        out.push_str(&format!(
                            "{},{},{},{:.4},{},{}\n",
                            table.metric,
                            row,
                            col,
                            v,
                            row_best.contains(&key),
                            col_best.contains(&key)
                        ));
                    }
                }
            }
            Ok(out)
        }
    }
}
