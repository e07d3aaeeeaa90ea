//! CSV and JSON result files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{SweepResult, SCHEMA_VERSION};

use super::write_atomic;

pub const CSV_COLUMNS: [&str; 12] = [
    "axis1",
    "axis2",
    "mean_r2x",
    "std_r2x",
    "mean_r2y",
    "std_r2y",
    "mean_stability",
    "std_stability",
    "theory_r2x",
    "theory_r2y",
    "theta_crit",
    "trials_effective",
];

/// Significant digits in CSV output.
pub const CSV_DIGITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown format `{s}`, expected csv or json"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub experiment: String,
    pub preset: Option<String>,
    pub scale: Option<String>,
    pub label: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema_version: u32,
    pub metadata: RunMetadata,
    pub correlation: Option<f64>,
    pub result: SweepResult,
}

/// `x` rounded to `digits` significant digits, printed in its shortest form.
pub fn format_significant(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return String::new();
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x);
    rounded.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format_significant(v, CSV_DIGITS))
}

pub fn csv_string(result: &SweepResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for p in &result.points {
        let f = |x: f64| format_significant(x, CSV_DIGITS);
        w.write_record([
            f(p.axis1),
            opt(p.axis2),
            f(p.mean_r2x),
            f(p.std_r2x),
            f(p.mean_r2y),
            f(p.std_r2y),
            opt(p.mean_stability),
            opt(p.std_stability),
            f(p.theory_r2x),
            f(p.theory_r2y),
            f(p.theta_crit),
            p.trials_effective.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn json_string(result: &SweepResult, metadata: &RunMetadata) -> Result<String> {
    let doc = ResultDocument {
        schema_version: SCHEMA_VERSION,
        metadata: metadata.clone(),
        correlation: result.correlation,
        result: result.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Writes one result atomically.
pub fn emit_results(result: &SweepResult, format: Format, path: &Path, metadata: &RunMetadata) -> Result<()> {
    let text = match format {
        Format::Csv => csv_string(result)?,
        Format::Json => json_string(result, metadata)?,
    };
    write_atomic(path, text.as_bytes())
}

pub fn read_results_json(text: &str) -> Result<ResultDocument> {
    let doc: ResultDocument = serde_json::from_str(text)?;
    if doc.schema_version > SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "result schema version {} is newer than the supported {SCHEMA_VERSION}",
            doc.schema_version
        )));
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(0.625, 12), "0.625");
        assert_eq!(format_significant(1.0 / 3.0, 12), "0.333333333333");
        assert_eq!(format_significant(2.0 / 3.0 * 1e-7, 12), "0.0000000666666666667");
        assert_eq!(format_significant(f64::NAN, 12), "");
        assert_eq!(format_significant(0.0, 12), "0");
    }
}
