//! Benchmark report assembly and file emission.
//!
//! CSV files are UTF-8 with `.` as the decimal separator, `\n` line ends,
//! and floats printed with 17 significant digits, so identical reports
//! yield identical bytes.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::aggregation::CvMode;
use crate::error::{Error, Result};
use crate::simbench::ExperimentConfig;

/// One replication: MISE per report column, the cross-validated
/// temperature, the truncation level used, and the error if the
/// replication failed (failed rows keep their slot in the report).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub values: Vec<f64>,
    pub cv_temperature: Option<f64>,
    pub truncation_q: Option<f64>,
    pub error: Option<String>,
}

/// A full experiment report: per-replication MISE values plus per-column
/// mean and standard deviation (unbiased, `n - 1` divisor).
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub columns: Vec<String>,
    pub rows: Vec<ReplicationRow>,
    pub means: Vec<Option<f64>>,
    pub sds: Vec<Option<f64>>,
    pub cv_mode: CvMode,
    pub versions: String,
    pub wall_clock_secs: f64,
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

impl ExperimentReport {
    /// Mean of a named column, when any replication succeeded.
    pub fn mean_of(&self, column: &str) -> Option<f64> {
        let idx = self.columns.iter().position(|c| c == column)?;
        self.means[idx]
    }

    /// Standard deviation of a named column.
    pub fn sd_of(&self, column: &str) -> Option<f64> {
        let idx = self.columns.iter().position(|c| c == column)?;
        self.sds[idx]
    }

    /// Per-replication CSV: one row per replication, failed rows keep
    /// empty value cells and carry the error message.
    pub fn replications_csv(&self) -> String {
        let mut out = String::from("replication");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",cv_temperature,truncation_q,error\n");
        for row in &self.rows {
            out.push_str(&row.replication.to_string());
            for col in 0..self.columns.len() {
                out.push(',');
                if row.error.is_none() {
                    out.push_str(&fmt_float(row.values[col]));
                }
            }
            out.push(',');
            out.push_str(&fmt_opt(row.cv_temperature));
            out.push(',');
            out.push_str(&fmt_opt(row.truncation_q));
            out.push(',');
            if let Some(e) = &row.error {
                out.push_str(&csv_escape(e));
            }
            out.push('\n');
        }
        out
    }

    /// Summary CSV in the table layout: temperature columns, then ERM and
    /// aggCVT, one row for the mean and one for the standard deviation.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("stat");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        if self.rows.is_empty() {
            return out;
        }
        out.push_str("mean");
        for &m in &self.means {
            out.push(',');
            out.push_str(&fmt_opt(m));
        }
        out.push('\n');
        out.push_str("sd");
        for &s in &self.sds {
            out.push(',');
            out.push_str(&fmt_opt(s));
        }
        out.push('\n');
        out
    }

    /// Metadata sidecar: config echo, seed-derivation rule, versions,
    /// truncation levels and chosen temperatures per replication, and the
    /// wall clock.
    pub fn metadata_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Metadata<'a> {
            config: &'a ExperimentConfig,
            cv_mode: CvMode,
            versions: &'a str,
            seed_derivation: &'static str,
            columns: &'a [String],
            truncation_q_values: Vec<Option<f64>>,
            cv_temperatures: Vec<Option<f64>>,
            failed_replications: usize,
            wall_clock_secs: f64,
        }
        let meta = Metadata {
            config: &self.config,
            cv_mode: self.cv_mode,
            versions: &self.versions,
            seed_derivation:
                "ChaCha8Rng::seed_from_u64(seed) with stream = replication * 8 + channel \
                 (0 = data, 1 = split, 2 = test points)",
            columns: &self.columns,
            truncation_q_values: self.rows.iter().map(|r| r.truncation_q).collect(),
            cv_temperatures: self.rows.iter().map(|r| r.cv_temperature).collect(),
            failed_replications: self.rows.iter().filter(|r| r.error.is_some()).count(),
            wall_clock_secs: self.wall_clock_secs,
        };
        serde_json::to_string_pretty(&meta)
            .map_err(|e| Error::InvalidConfig(format!("metadata serialization failed: {e}")))
    }
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// File names written by [`emit_report`].
pub const REPLICATIONS_FILE: &str = "replications.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const METADATA_FILE: &str = "metadata.json";

/// Writes the per-replication CSV, the summary CSV and the metadata
/// sidecar into `dir`. Existing files are only overwritten with `force`.
pub fn emit_report(report: &ExperimentReport, dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        (REPLICATIONS_FILE, report.replications_csv()),
        (SUMMARY_FILE, report.summary_csv()),
        (METADATA_FILE, report.metadata_json()?),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, _) in &files {
        let path = dir.join(name);
        if path.exists() && !force {
            return Err(Error::io(
                &path,
                std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    "refusing to overwrite (pass force)",
                ),
            ));
        }
    }
    for (name, content) in files {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::CvMode;
    use crate::simbench::preset_table1;

    fn tiny_report(rows: Vec<ReplicationRow>) -> ExperimentReport {
        let mut cfg = preset_table1();
        cfg.replications = rows.len().max(1);
        let columns = crate::simbench::column_labels(&cfg);
        let n_cols = columns.len();
        let ok: Vec<&ReplicationRow> = rows.iter().filter(|r| r.error.is_none()).collect();
        let means = (0..n_cols)
            .map(|c| {
                if ok.is_empty() {
                    None
                } else {
                    Some(ok.iter().map(|r| r.values[c]).sum::<f64>() / ok.len() as f64)
                }
            })
            .collect();
        ExperimentReport {
            config: cfg,
            columns,
            rows,
            means,
            sds: vec![None; n_cols],
            cv_mode: CvMode::ExactLoo,
            versions: "test".into(),
            wall_clock_secs: 0.25,
        }
    }

    fn ok_row(rep: usize) -> ReplicationRow {
        ReplicationRow {
            replication: rep,
            values: vec![0.1; 9],
            cv_temperature: Some(1.2),
            truncation_q: Some(2.5),
            error: None,
        }
    }

    #[test]
    fn summary_header_matches_table_layout() {
        let report = tiny_report(vec![ok_row(0)]);
        let csv = report.summary_csv();
        let header = csv.lines().next().unwrap();
        assert_eq!(
            header,
            "stat,T=0.1,T=0.5,T=0.7,T=1.0,T=1.5,T=2.0,ERM,aggCVT,ERM_argmin"
        );
        // a single replication leaves the sd row empty
        let sd_line = csv.lines().nth(2).unwrap();
        assert_eq!(sd_line, "sd,,,,,,,,,");
    }

    #[test]
    fn empty_report_emits_headers_only() {
        let report = tiny_report(vec![]);
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report, dir.path(), false).unwrap();
        let summary = std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        assert_eq!(summary.lines().count(), 1);
        let reps = std::fs::read_to_string(dir.path().join(REPLICATIONS_FILE)).unwrap();
        assert_eq!(reps.lines().count(), 1);
    }

    #[test]
    fn emit_refuses_overwrite_without_force_and_is_byte_stable() {
        let report = tiny_report(vec![ok_row(0), ok_row(1)]);
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report, dir.path(), false).unwrap();
        let before = std::fs::read(dir.path().join(REPLICATIONS_FILE)).unwrap();
        assert!(emit_report(&report, dir.path(), false).is_err());
        emit_report(&report, dir.path(), true).unwrap();
        let after = std::fs::read(dir.path().join(REPLICATIONS_FILE)).unwrap();
        assert_eq!(before, after);
        let s1 = std::fs::read(dir.path().join(SUMMARY_FILE)).unwrap();
        emit_report(&report, dir.path(), true).unwrap();
        let s2 = std::fs::read(dir.path().join(SUMMARY_FILE)).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn failed_rows_keep_their_slot() {
        let mut bad = ok_row(1);
        bad.values = vec![];
        bad.cv_temperature = None;
        bad.truncation_q = None;
        bad.error = Some("degenerate signal".into());
        let report = tiny_report(vec![ok_row(0), bad]);
        let csv = report.replications_csv();
        assert_eq!(csv.lines().count(), 3);
        let line = csv.lines().nth(2).unwrap();
        assert!(line.starts_with("1,"));
        assert!(line.ends_with("degenerate signal"));
    }

    #[test]
    fn float_format_has_17_significant_digits() {
        let s = fmt_float(std::f64::consts::PI);
        assert_eq!(s, "3.1415926535897931e0");
        let back: f64 = s.parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }
}
