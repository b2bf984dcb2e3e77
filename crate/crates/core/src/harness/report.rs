use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::diagnostics::{EnergyReport, StabilityReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Validation(format!("unknown report format '{other}'"))),
        }
    }
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CsvCell {
    Float(Option<f64>),
    Int(i64),
    Text(&'static str),
}

impl From<f64> for CsvCell {
    fn from(v: f64) -> Self {
        CsvCell::Float(Some(v))
    }
}

impl From<Option<f64>> for CsvCell {
    fn from(v: Option<f64>) -> Self {
        CsvCell::Float(v)
    }
}

impl From<usize> for CsvCell {
    fn from(v: usize) -> Self {
        CsvCell::Int(v as i64)
    }
}

impl From<bool> for CsvCell {
    fn from(v: bool) -> Self {
        CsvCell::Int(v as i64)
    }
}

impl From<&'static str> for CsvCell {
    fn from(v: &'static str) -> Self {
        CsvCell::Text(v)
    }
}

/// A report with a flat table view for plotting.
pub trait CsvMirror {
    fn csv_header(&self) -> Vec<&'static str>;
    fn csv_rows(&self) -> Vec<Vec<CsvCell>>;
}

/// Shortest round-trip representation; empty for missing or non-finite values.
pub fn format_float(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:?}"),
        _ => String::new(),
    }
}

fn format_cell(c: CsvCell) -> String {
    match c {
        CsvCell::Float(x) => format_float(x),
        CsvCell::Int(i) => i.to_string(),
        CsvCell::Text(t) => t.to_string(),
    }
}

pub fn render_csv<R: CsvMirror + ?Sized>(report: &R) -> String {
    let mut out = report.csv_header().join(",");
    out.push('\n');
    for row in report.csv_rows() {
        let cells: Vec<String> = row.into_iter().map(format_cell).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

pub fn render_json<R: Serialize + ?Sized>(report: &R) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Writes `report` to `path` in the given format.
pub fn serialize_report<R>(report: &R, format: ReportFormat, path: &Path) -> Result<()>
where
    R: Serialize + CsvMirror + ?Sized,
{
    let text = match format {
        ReportFormat::Json => render_json(report)?,
        ReportFormat::Csv => render_csv(report),
    };
    fs::write(path, text)?;
    Ok(())
}

/// Writes `<dir>/<stem>.json` and `<dir>/<stem>.csv`.
pub fn write_pair<R>(report: &R, dir: &Path, stem: &str) -> Result<Vec<PathBuf>>
where
    R: Serialize + CsvMirror + ?Sized,
{
    let mut files = Vec::with_capacity(2);
    for format in [ReportFormat::Json, ReportFormat::Csv] {
        let path = dir.join(format!("{stem}.{}", format.extension()));
        serialize_report(report, format, &path)?;
        files.push(path);
    }
    Ok(files)
}

impl CsvMirror for StabilityReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["t", "W", "Z", "grad_distance", "envelope_literal", "envelope_signfixed"]
    }

    fn csv_rows(&self) -> Vec<Vec<CsvCell>> {
        (0..self.times.len())
            .map(|k| {
                vec![
                    self.times[k].into(),
                    self.w[k].into(),
                    self.z[k].into(),
                    self.grad_distance[k].into(),
                    self.envelope_literal[k].into(),
                    self.envelope_signfixed[k].into(),
                ]
            })
            .collect()
    }
}

/// Energy functionals along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergySeries {
    pub series: Vec<EnergyReport>,
}

impl CsvMirror for EnergySeries {
    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "t",
            "u_alpha_norm",
            "v_sq_norm",
            "grad_u_q",
            "grad_v_sq",
            "weighted_grad",
            "H_integral",
            "Lambda0",
            "robin_trace",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<CsvCell>> {
        self.series
            .iter()
            .map(|e| {
                vec![
                    e.t.into(),
                    e.u_alpha_norm.into(),
                    e.v_sq_norm.into(),
                    e.grad_u_q.into(),
                    e.grad_v_sq.into(),
                    e.weighted_grad.into(),
                    e.h_integral.into(),
                    e.lambda0.into(),
                    e.robin_trace.into(),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Toy {
        times: Vec<f64>,
        value: Option<f64>,
    }

    impl CsvMirror for Toy {
        fn csv_header(&self) -> Vec<&'static str> {
            vec!["t", "value"]
        }
        fn csv_rows(&self) -> Vec<Vec<CsvCell>> {
            self.times.iter().map(|&t| vec![t.into(), self.value.into()]).collect()
        }
    }

    #[test]
    fn unknown_format_is_rejected() {
        assert!(matches!("xml".parse::<ReportFormat>(), Err(Error::Validation(_))));
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
    }

    #[test]
    fn serialization_is_byte_stable_and_round_trips() {
        let toy = Toy { times: vec![0.0, 0.1, 1.0 / 3.0, 1e-300], value: Some(std::f64::consts::PI) };
        let dir = tempfile::tempdir().unwrap();
        let a = write_pair(&toy, dir.path(), "a").unwrap();
        let b = write_pair(&toy, dir.path(), "b").unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
        let csv = fs::read_to_string(&a[1]).unwrap();
        let parsed: Vec<f64> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(parsed, toy.times);
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&a[0]).unwrap()).unwrap();
        assert_eq!(json["times"][2].as_f64().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn missing_values_render_empty() {
        assert_eq!(format_float(None), "");
        assert_eq!(format_float(Some(f64::NAN)), "");
        assert_eq!(format_float(Some(0.5)), "0.5");
    }
}
