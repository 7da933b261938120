//! Report rows and emission. One row per check cell, carrying the full
//! parameterization needed to reproduce it; CSV and JSON render the same
//! records with numbers at 12 significant digits.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const CSV_HEADER: [&str; 13] = [
    "check_id",
    "env",
    "seed",
    "gamma",
    "T",
    "d",
    "model",
    "exact",
    "predicted",
    "mc_mean",
    "mc_se",
    "pass",
    "runtime_ms",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub check_id: String,
    pub env: String,
    pub seed: u64,
    pub gamma: f64,
    #[serde(rename = "T")]
    pub temperature: Option<f64>,
    pub d: Option<usize>,
    pub model: String,
    pub exact: Option<f64>,
    pub predicted: Option<f64>,
    pub mc_mean: Option<f64>,
    pub mc_se: Option<f64>,
    pub pass: bool,
    pub runtime_ms: f64,
}

impl ReportRow {
    pub fn new(check_id: &str, env: &str, seed: u64, gamma: f64) -> Self {
        Self {
            check_id: check_id.to_string(),
            env: env.to_string(),
            seed,
            gamma,
            temperature: None,
            d: None,
            model: String::new(),
            exact: None,
            predicted: None,
            mc_mean: None,
            mc_se: None,
            pass: false,
            runtime_ms: 0.0,
        }
    }
}

/// 12 significant digits.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.11e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt12).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => bail!("unknown format {other:?} (expected csv or json)"),
        }
    }
}

/// Stable row order so identical runs emit identical files (modulo the
/// runtime column).
pub fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| {
        (&a.check_id, &a.env, a.seed, &a.model, a.d)
            .partial_cmp(&(&b.check_id, &b.env, b.seed, &b.model, b.d))
            .unwrap()
            .then(a.gamma.partial_cmp(&b.gamma).unwrap())
            .then(
                a.temperature
                    .unwrap_or(f64::NAN)
                    .partial_cmp(&b.temperature.unwrap_or(f64::NAN))
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
    });
}

pub fn render_csv(rows: &[ReportRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(CSV_HEADER)?;
    for row in rows {
        writer.write_record([
            row.check_id.clone(),
            row.env.clone(),
            row.seed.to_string(),
            fmt12(row.gamma),
            fmt_opt(row.temperature),
            row.d.map(|d| d.to_string()).unwrap_or_default(),
            row.model.clone(),
            fmt_opt(row.exact),
            fmt_opt(row.predicted),
            fmt_opt(row.mc_mean),
            fmt_opt(row.mc_se),
            row.pass.to_string(),
            format!("{:.3}", row.runtime_ms),
        ])?;
    }
    Ok(String::from_utf8(writer.into_inner()?)?)
}

pub fn render_json(rows: &[ReportRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)?)
}

/// Writes the report. Empty row sets are an error.
pub fn emit_report(rows: &[ReportRow], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    if rows.is_empty() {
        bail!("refusing to emit an empty report");
    }
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let text = match format {
        ReportFormat::Csv => render_csv(&sorted)?,
        ReportFormat::Json => render_json(&sorted)?,
    };
    std::fs::write(&path, text)
        .with_context(|| format!("writing report to {}", path.as_ref().display()))?;
    Ok(())
}

/// Re-renders a stored JSON report as CSV.
pub fn json_report_to_csv(input: impl AsRef<Path>, output: impl AsRef<Path>) -> Result<usize> {
    let text = std::fs::read_to_string(&input)
        .with_context(|| format!("reading {}", input.as_ref().display()))?;
    let rows: Vec<ReportRow> = serde_json::from_str(&text)?;
    emit_report(&rows, ReportFormat::Csv, output)?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row() -> ReportRow {
        ReportRow {
            check_id: "V8".into(),
            env: "directed_cycle6_uniform".into(),
            seed: 1,
            gamma: 0.9,
            temperature: None,
            d: None,
            model: "gaussian".into(),
            exact: Some(3.21e-12),
            predicted: Some(0.0),
            mc_mean: None,
            mc_se: None,
            pass: true,
            runtime_ms: 1.25,
        }
    }

    #[test]
    fn empty_report_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&[], ReportFormat::Csv, dir.path().join("r.csv")).is_err());
    }

    #[test]
    fn single_row_renders_with_header_and_pass_flag() {
        let text = render_csv(&[sample_row()]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        let row = lines.next().unwrap();
        assert!(row.starts_with("V8,directed_cycle6_uniform,1,"));
        assert!(row.contains(",true,"));
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn json_round_trips_and_re_renders() {
        let dir = tempfile::tempdir().unwrap();
        let json_path = dir.path().join("r.json");
        let csv_path = dir.path().join("r.csv");
        emit_report(&[sample_row()], ReportFormat::Json, &json_path).unwrap();
        let n = json_report_to_csv(&json_path, &csv_path).unwrap();
        assert_eq!(n, 1);
        let text = std::fs::read_to_string(csv_path).unwrap();
        assert!(text.contains("3.21000000000e-12"));
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt12(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(fmt12(0.0), "0");
    }
}
