//! Curve reports as CSV or JSON lines.
//!
//! Both formats carry the columns `model_name, n_train, cost, auc, seed` in
//! that order, with rows sorted by model name, N and seed. The JSON-lines form
//! starts with a `{"schema":..,"columns":[..]}` header record.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::sweep::{sort_points, CurvePoint};
use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_atomic};

pub const CURVE_SCHEMA: &str = "finegrain.curve/1";
pub const COLUMNS: [&str; 5] = ["model_name", "n_train", "cost", "auc", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    JsonLines,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" | "json-lines" => Ok(ReportFormat::JsonLines),
            other => Err(Error::invalid(format!("unknown report format `{other}`"))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::JsonLines => "jsonl",
        })
    }
}

#[derive(Serialize, Deserialize)]
struct JsonHeader {
    schema: String,
    columns: Vec<String>,
}

pub fn report_to_string(points: &[CurvePoint], format: ReportFormat) -> Result<String> {
    let mut sorted = points.to_vec();
    sort_points(&mut sorted);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            w.write_record(COLUMNS)?;
            for p in &sorted {
                w.serialize(p)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
        }
        ReportFormat::JsonLines => {
            let mut out = serde_json::to_string(&JsonHeader {
                schema: CURVE_SCHEMA.into(),
                columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
            })?;
            out.push('\n');
            for p in &sorted {
                out.push_str(&serde_json::to_string(p)?);
                out.push('\n');
            }
            Ok(out)
        }
    }
}

pub fn emit_report(points: &[CurvePoint], format: ReportFormat, path: &Path) -> Result<()> {
    write_atomic(path, report_to_string(points, format)?.as_bytes())
}

pub fn parse_report(text: &str, format: ReportFormat) -> Result<Vec<CurvePoint>> {
    match format {
        ReportFormat::Csv => {
            let mut r = csv::Reader::from_reader(text.as_bytes());
            let headers = r.headers()?.clone();
            if headers.iter().ne(COLUMNS.iter().copied()) {
                return Err(Error::invalid("unexpected report columns"));
            }
            r.deserialize().map(|row| row.map_err(Error::from)).collect()
        }
        ReportFormat::JsonLines => {
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            let header: JsonHeader = serde_json::from_str(
                lines.next().ok_or_else(|| Error::invalid("missing report header"))?,
            )?;
            if header.schema != CURVE_SCHEMA {
                return Err(Error::invalid(format!("unsupported schema `{}`", header.schema)));
            }
            lines.map(|l| serde_json::from_str(l).map_err(Error::from)).collect()
        }
    }
}

pub fn read_report(path: &Path, format: ReportFormat) -> Result<Vec<CurvePoint>> {
    parse_report(&read_to_string(path)?, format)
}
