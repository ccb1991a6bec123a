//! CSV, markdown and JSON renderings of metrics rows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{MeanSd, MetricsRow};

pub const COLUMNS: [&str; 7] = [
    "Task Setting",
    "Planning Approach",
    "% Plan Complete",
    "% Success",
    "Avg. Plan Time (s)",
    "Avg. Tokens",
    "Avg. Plan Length",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Markdown,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown report format `{s}`")),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Markdown => "md",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no rows to report")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn pm(m: MeanSd, decimals: usize) -> String {
    format!("{:.*} ± {:.*}", decimals, m.mean, decimals, m.sd)
}

/// Display cells of a row, in column order.
pub fn cells(row: &MetricsRow) -> [String; 7] {
    [
        row.setting.clone(),
        row.approach.clone(),
        format!("{:.1}", row.plan_complete_pct),
        format!("{:.1}", row.success_pct),
        pm(row.plan_time_s, 3),
        pm(row.tokens, 1),
        row.plan_length.map_or_else(|| "n/a".to_string(), |m| pm(m, 2)),
    ]
}

pub fn emit_report(rows: &[MetricsRow], format: Format) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(COLUMNS)?;
            for row in rows {
                w.write_record(cells(row))?;
            }
            let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        Format::Markdown => {
            let line = |c: &[String]| format!("| {} |\n", c.join(" | "));
            let header: Vec<String> = COLUMNS.iter().map(|s| s.to_string()).collect();
            let mut out = line(&header);
            out.push_str(&line(&vec!["---".to_string(); COLUMNS.len()]));
            for row in rows {
                out.push_str(&line(&cells(row)));
            }
            Ok(out)
        }
        Format::Json => Ok(serde_json::to_string_pretty(rows)? + "\n"),
    }
}
