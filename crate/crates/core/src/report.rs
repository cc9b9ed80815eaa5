//! Plain-text and CSV tables for evaluation reports.
//!
//! Two layouts are provided. The summary table has one row per labelled run
//! (for example one per task or per checkpoint) with AP50:95 and AP50 for
//! masks and, when available, boxes. The per-class table lists AP50:95,
//! AP50 and AR1 for every class, followed by the mean over classes. All
//! metrics are printed as percentages with two decimals.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eval::{ClassReport, EvalReport, EvalSummary};
use crate::io::csv_field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportStyle {
    Summary,
    PerClass,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub const MISSING: &str = "-";

/// `0.645` -> `"64.50"`.
pub fn percent(value: f64) -> String {
    format!("{:.2}", value * 100.0)
}

fn opt_percent(value: Option<f64>) -> String {
    value.map_or_else(|| MISSING.to_string(), percent)
}

/// One row of the summary table.
#[derive(Debug, Clone, Copy)]
pub struct SummaryEntry<'a> {
    pub label: &'a str,
    pub mask: &'a EvalReport,
    pub bbox: Option<&'a EvalReport>,
}

pub fn summary_table(entries: &[SummaryEntry<'_>]) -> Table {
    let with_bbox = entries.iter().any(|e| e.bbox.is_some());
    let mut header = vec!["Run".to_string(), "AP50:95".into(), "AP50".into()];
    if with_bbox {
        header.extend(["APbb50:95".to_string(), "APbb50".into()]);
    }
    let cells = |s: Option<&EvalSummary>| {
        [
            opt_percent(s.map(|s| s.ap)),
            opt_percent(s.and_then(|s| s.ap50)),
        ]
    };
    let rows = entries
        .iter()
        .map(|e| {
            let mut row = vec![e.label.to_string()];
            row.extend(cells(Some(&e.mask.summary)));
            if with_bbox {
                row.extend(cells(e.bbox.map(|b| &b.summary)));
            }
            row
        })
        .collect();
    Table { header, rows }
}

pub const MEAN_ROW: &str = "Mean";

/// Per-class table for a mask evaluation and, optionally, the matching box
/// evaluation of the same predictions.
pub fn class_table(mask: &EvalReport, bbox: Option<&EvalReport>) -> Table {
    let mut header = vec![
        "Class".to_string(),
        "AP50:95".into(),
        "AP50".into(),
        "AR1".into(),
    ];
    if bbox.is_some() {
        header.extend(["APbb50:95".to_string(), "APbb50".into(), "ARbb1".into()]);
    }
    let class_cells = |c: Option<&ClassReport>| {
        [
            opt_percent(c.map(|c| c.ap)),
            opt_percent(c.and_then(|c| c.ap50)),
            opt_percent(c.and_then(|c| c.ar_at(1))),
        ]
    };
    let mut rows: Vec<Vec<String>> = mask
        .classes
        .iter()
        .map(|c| {
            let mut row = vec![c.name.clone()];
            row.extend(class_cells(Some(c)));
            if let Some(b) = bbox {
                row.extend(class_cells(b.classes.iter().find(|bc| bc.category == c.category)));
            }
            row
        })
        .collect();

    let summary_cells = |s: &EvalSummary| [percent(s.ap), opt_percent(s.ap50), opt_percent(s.ar_at(1))];
    let mut mean = vec![MEAN_ROW.to_string()];
    mean.extend(summary_cells(&mask.summary));
    if let Some(b) = bbox {
        mean.extend(summary_cells(&b.summary));
    }
    rows.push(mean);
    Table { header, rows }
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let fields: Vec<String> = row.iter().map(|f| csv_field(f)).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Space-aligned text; the first column is left-aligned, numbers right.
    pub fn to_text(&self) -> String {
        let cols = self.header.len();
        let mut widths = vec![0usize; cols];
        for row in std::iter::once(&self.header).chain(&self.rows) {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, row: &[String]| {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push_str("  ");
                }
                if i == 0 {
                    let _ = write!(out, "{cell:<width$}", width = widths[0]);
                } else {
                    let _ = write!(out, "{cell:>width$}", width = widths[i]);
                }
            }
            let trimmed = out.trim_end().len();
            out.truncate(trimmed);
            out.push('\n');
        };
        line(&mut out, &self.header);
        let rule: usize = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        for row in &self.rows {
            line(&mut out, row);
        }
        out
    }
}
