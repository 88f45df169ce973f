//! Report emission: the structured JSON document and the CSV view of sweep
//! rows for plotting.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::montecarlo::{AggregateMetrics, RunReport};

/// Output format of `emit_report`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    /// Full JSON document with the stable schema.
    Structured,
    /// One aggregate CSV row per sweep value (or a single overall row).
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "structured" | "json" => Ok(ReportFormat::Structured),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format {other:?} (structured|csv)")),
        }
    }
}

/// Writes the report in the requested format; returns the written paths.
pub fn emit_report(
    report: &RunReport,
    format: ReportFormat,
    out_dir: &Path,
) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    match format {
        ReportFormat::Structured => {
            let path = out_dir.join("report.json");
            let file = File::create(&path)?;
            let mut writer = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut writer, report)?;
            writer.write_all(b"\n")?;
            writer.flush()?;
            Ok(vec![path])
        }
        ReportFormat::Csv => {
            let path = out_dir.join("report.csv");
            let mut out = BufWriter::new(File::create(&path)?);
            writeln!(
                out,
                "axis,value,trials,tp,tn,fp,fn,detection_rate,false_alarm_rate,\
                 angle_p50_deg,angle_p90_deg,angle_p95_deg,\
                 loc_p50_m,loc_p90_m,loc_p95_m,loc_mean_m,failures"
            )?;
            if report.sweep_rows.is_empty() {
                write_csv_row(&mut out, "overall", f64::NAN, report.trials, &report.aggregate)?;
            } else {
                for row in &report.sweep_rows {
                    let axis = serde_json::to_value(row.axis)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_else(|| format!("{:?}", row.axis));
                    write_csv_row(&mut out, &axis, row.value, report.trials, &row.aggregate)?;
                }
            }
            out.flush()?;
            Ok(vec![path])
        }
    }
}

fn write_csv_row<W: Write>(
    out: &mut W,
    axis: &str,
    value: f64,
    trials: usize,
    m: &AggregateMetrics,
) -> io::Result<()> {
    writeln!(
        out,
        "{axis},{value},{trials},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        m.confusion.true_positive,
        m.confusion.true_negative,
        m.confusion.false_positive,
        m.confusion.false_negative,
        m.detection_rate,
        m.false_alarm_rate,
        m.angle_error_deg.p50,
        m.angle_error_deg.p90,
        m.angle_error_deg.p95,
        m.localization_error_m.p50,
        m.localization_error_m.p90,
        m.localization_error_m.p95,
        m.localization_error_m.mean,
        m.failures,
    )
}
