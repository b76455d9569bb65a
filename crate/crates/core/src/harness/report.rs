//! Evaluation reports and their JSON/CSV renderings.
//!
//! Floats are written with 17 significant digits so that every value parses
//! back to the identical `f64`. Units: accuracy and ECE are fractions in
//! [0, 1], NLL is in nats per example, wall-clock time in seconds.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{accuracy, brier, ece, nll, EvalBatch, DEFAULT_ECE_BINS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: String,
    pub ensemble_size: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub nll: f64,
    pub ece: f64,
    pub brier: f64,
    pub temperatures: Vec<f64>,
    pub mc_delta: Option<f64>,
    pub wall_clock_seconds: f64,
    pub config_echo: String,
}

/// The four scores of one evaluation batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub accuracy: f64,
    pub nll: f64,
    pub ece: f64,
    pub brier: f64,
}

impl Scores {
    pub fn of(batch: &EvalBatch) -> Result<Self> {
        Ok(Self {
            accuracy: accuracy(batch),
            nll: nll(batch),
            ece: ece(batch, DEFAULT_ECE_BINS)?,
            brier: brier(batch),
        })
    }
}

impl MetricsReport {
    pub fn check_finite(&self) -> Result<()> {
        let fields = [
            ("accuracy", self.accuracy),
            ("nll", self.nll),
            ("ece", self.ece),
            ("brier", self.brier),
            ("wall_clock_seconds", self.wall_clock_seconds),
        ];
        for (name, v) in fields
            .into_iter()
            .chain(self.temperatures.iter().map(|&t| ("temperature", t)))
        {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("report field {name} is {v}")));
            }
        }
        Ok(())
    }

    /// Whether every field except wall-clock time agrees, metrics within
    /// `tol`.
    pub fn matches(&self, other: &MetricsReport, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tol;
        self.variant == other.variant
            && self.ensemble_size == other.ensemble_size
            && self.seed == other.seed
            && close(self.accuracy, other.accuracy)
            && close(self.nll, other.nll)
            && close(self.ece, other.ece)
            && close(self.brier, other.brier)
            && self.temperatures.len() == other.temperatures.len()
            && self
                .temperatures
                .iter()
                .zip(&other.temperatures)
                .all(|(a, b)| close(*a, *b))
            && self.mc_delta == other.mc_delta
            && self.config_echo == other.config_echo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Usage(format!(
                "unknown report format {other:?} (expected json|csv)"
            ))),
        }
    }
}

/// `v` with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

pub fn reports_to_json(reports: &[MetricsReport]) -> String {
    let mut out = String::from("[\n");
    for (i, r) in reports.iter().enumerate() {
        let temps: Vec<String> = r.temperatures.iter().map(|&t| format_f64(t)).collect();
        let mc = r.mc_delta.map_or_else(|| "null".to_string(), format_f64);
        let _ = write!(
            out,
            "  {{\"variant\": {}, \"ensemble_size\": {}, \"seed\": {}, \"accuracy\": {}, \"nll\": {}, \
             \"ece\": {}, \"brier\": {}, \"temperatures\": [{}], \"mc_delta\": {}, \
             \"wall_clock_seconds\": {}, \"config_echo\": {}}}",
            json_string(&r.variant),
            r.ensemble_size,
            r.seed,
            format_f64(r.accuracy),
            format_f64(r.nll),
            format_f64(r.ece),
            format_f64(r.brier),
            temps.join(", "),
            mc,
            format_f64(r.wall_clock_seconds),
            json_string(&r.config_echo),
        );
        out.push_str(if i + 1 < reports.len() { ",\n" } else { "\n" });
    }
    out.push_str("]\n");
    out
}

pub const CSV_HEADER: &str =
    "variant,ensemble_size,seed,accuracy,nll_nats,ece,brier,temperatures,mc_delta,wall_clock_seconds";

/// Header plus one row per report. Temperatures are `;`-separated; the
/// config echo is left out.
pub fn reports_to_csv(reports: &[MetricsReport]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in reports {
        let temps: Vec<String> = r.temperatures.iter().map(|&t| format_f64(t)).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.variant,
            r.ensemble_size,
            r.seed,
            format_f64(r.accuracy),
            format_f64(r.nll),
            format_f64(r.ece),
            format_f64(r.brier),
            temps.join(";"),
            r.mc_delta.map(format_f64).unwrap_or_default(),
            format_f64(r.wall_clock_seconds),
        );
    }
    out
}

pub fn parse_reports_json(text: &str) -> Result<Vec<MetricsReport>> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("report JSON: {e}")))
}

pub fn emit_report(reports: &[MetricsReport], format: ReportFormat, path: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Usage("no reports to emit".into()));
    }
    for r in reports {
        r.check_finite()?;
    }
    let text = match format {
        ReportFormat::Json => reports_to_json(reports),
        ReportFormat::Csv => reports_to_csv(reports),
    };
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
