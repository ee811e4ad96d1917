//! Run reports: one JSON document plus one CSV per record.
//!
//! Field order follows struct declaration order, numbers use the shortest
//! round-trip representation and nothing time-dependent is recorded, so a
//! report re-emitted from the same data is byte-identical.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimates::{CheckRecord, ConditionLevel};

pub const REPORT_SCHEMA: u32 = 1;

/// An error captured during a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRecord {
    pub stage: String,
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
    /// Per-component residual for incompatible data.
    pub residual: Option<Vec<f64>>,
}

impl FailureRecord {
    pub fn from_error(stage: &str, e: &Error) -> Self {
        let residual = match e {
            Error::Incompatible { residual, .. } => Some(residual.clone()),
            _ => None,
        };
        Self { stage: stage.into(), kind: e.kind().into(), message: e.to_string(), exit_code: e.exit_code(), residual }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Provenance {
    pub mesh: String,
    pub mesh_fingerprint: String,
    pub coefficient: String,
    pub poles: Vec<[f64; 3]>,
}

/// Condition parameters collected by the estimates pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConditionParameters {
    pub mu: Option<f64>,
    pub levels: Vec<ConditionLevel>,
    pub consistent: Vec<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub schema: u32,
    pub kind: String,
    pub seed: u64,
    pub config_hash: String,
    pub provenance: Provenance,
    pub conditions: ConditionParameters,
    pub records: Vec<CheckRecord>,
    pub failures: Vec<FailureRecord>,
}

impl Report {
    pub fn new(kind: &str, seed: u64, config_hash: &str) -> Self {
        Self { schema: REPORT_SCHEMA, kind: kind.into(), seed, config_hash: config_hash.into(), ..Default::default() }
    }

    pub fn push(&mut self, r: CheckRecord) {
        self.records.push(r);
    }

    pub fn fail(&mut self, stage: &str, e: &Error) {
        self.failures.push(FailureRecord::from_error(stage, e));
    }

    pub fn all_pass(&self) -> bool {
        self.failures.is_empty() && self.records.iter().all(|r| r.pass)
    }

    /// 0 all pass, 1 check failure, 2 config or io error, 3 numeric
    /// failure; the largest applicable code wins.
    pub fn exit_code(&self) -> i32 {
        let failure = self.failures.iter().map(|f| f.exit_code).max().unwrap_or(0);
        let checks = if self.records.iter().all(|r| r.pass) { 0 } else { 1 };
        failure.max(checks)
    }

    pub fn record(&self, name: &str) -> Option<&CheckRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    CsvBundle,
}

fn csv_name(index: usize, name: &str) -> String {
    let clean: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
    format!("{index:02}-{clean}.csv")
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes `report.json` or the CSV bundle under `dir` and returns the
/// written paths.
pub fn emit_report(report: &Report, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    match format {
        ReportFormat::Json => {
            let p = dir.join("report.json");
            write(&p, &report.to_json()?)?;
            out.push(p);
        }
        ReportFormat::CsvBundle => {
            let sub = dir.join("records");
            std::fs::create_dir_all(&sub).map_err(|e| Error::Io(format!("{}: {e}", sub.display())))?;
            for (i, r) in report.records.iter().enumerate() {
                let p = sub.join(csv_name(i, &r.name));
                write(&p, &r.csv())?;
                out.push(p);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_valid_json() {
        let r = Report::new("solve", 3, "abc");
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(v["records"], serde_json::json!([]));
        assert_eq!(r.exit_code(), 0);
    }

    #[test]
    fn re_emission_is_identical_and_csv_rows_match() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Report::new("estimates", 0, "h");
        let mut rec = CheckRecord::new("a b", ["scale", "value"]);
        rec.samples = vec![[1.0, 2.0], [3.0, 0.1]];
        r.push(rec);
        let a = emit_report(&r, dir.path(), ReportFormat::Json).unwrap();
        let first = std::fs::read(&a[0]).unwrap();
        emit_report(&r, dir.path(), ReportFormat::Json).unwrap();
        assert_eq!(first, std::fs::read(&a[0]).unwrap());
        let csv = emit_report(&r, dir.path(), ReportFormat::CsvBundle).unwrap();
        let text = std::fs::read_to_string(&csv[0]).unwrap();
        assert!(csv[0].ends_with("00-a_b.csv"));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(r.exit_code(), 1);
    }

    #[test]
    fn exit_codes_follow_failure_kind() {
        let mut r = Report::new("solve", 0, "h");
        r.fail("solve", &Error::Incompatible { residual: vec![0.5], tolerance: 1e-8 });
        assert_eq!(r.exit_code(), 1);
        assert_eq!(r.failures[0].residual, Some(vec![0.5]));
        r.fail("solve", &Error::NotConverged { iterations: 1, residual: 1.0, history: vec![] });
        assert_eq!(r.exit_code(), 3);
        let mut c = Report::new("solve", 0, "h");
        c.fail("config", &Error::Config("x".into()));
        assert_eq!(c.exit_code(), 2);
    }
}
