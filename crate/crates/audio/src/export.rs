//! CSV and JSON renderings of fooling and distortion reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use uap_core::attack::FoolCount;
use uap_core::distortion::{DbEntry, DistortionReport};
use uap_core::report::{FoolingReport, ReportRow};

pub const FOOLING_HEADER: [&str; 6] = ["class", "frA_train", "frA_valid", "frB_train", "frB_valid", "mean_db"];
pub const DISTORTION_HEADER: [&str; 4] = ["label", "part", "metric", "db"];

/// Cell text for a fooling ratio; empty when undefined.
fn fr_cell(count: Option<FoolCount>) -> String {
    count.and_then(|c| c.ratio()).map(|r| r.to_string()).unwrap_or_default()
}

fn row_cells(row: &ReportRow) -> [String; 6] {
    [
        row.class.map_or_else(|| "total".to_owned(), |c| c.name().to_owned()),
        fr_cell(Some(row.model_a.train)),
        fr_cell(Some(row.model_a.valid)),
        fr_cell(row.model_b.map(|b| b.train)),
        fr_cell(row.model_b.map(|b| b.valid)),
        row.mean_db.map(|d| d.to_string()).unwrap_or_default(),
    ]
}

fn to_csv<const N: usize>(header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> Result<String, csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv of UTF-8 cells"))
}

/// One row per class, then the pooled total.
pub fn fooling_csv(report: &FoolingReport) -> Result<String, csv::Error> {
    to_csv(FOOLING_HEADER, report.rows.iter().chain([&report.total]).map(row_cells))
}

pub fn fooling_json(report: &FoolingReport) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// One row per clip, part and metric. Parts a clip does not have are
/// omitted; an all-zero part is written as `silent`.
pub fn distortion_csv(report: &DistortionReport) -> Result<String, csv::Error> {
    let rows = report.records.iter().flat_map(|r| {
        let label = r.label.map(|l| l.name().to_owned()).unwrap_or_default();
        r.entries().filter_map(move |(part, metric, entry)| {
            let db = match entry {
                DbEntry::Value(v) => v.to_string(),
                DbEntry::Silent => "silent".to_owned(),
                DbEntry::Absent => return None,
            };
            Some([label.clone(), part.name().to_owned(), metric.name().to_owned(), db])
        })
    });
    to_csv(DISTORTION_HEADER, rows)
}

pub fn distortion_json(report: &DistortionReport) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// UTC time stamp used in report file names.
pub fn timestamp_now() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string()
}

/// Writes `report_level{L}_{timestamp}.csv` and `.json` into `dir`.
pub fn write_fooling_report(dir: &Path, report: &FoolingReport, timestamp: &str) -> Result<[PathBuf; 2], ExportError> {
    let stem = dir.join(format!("report_level{}_{timestamp}", report.meta.level));
    let csv_path = stem.with_extension("csv");
    let json_path = stem.with_extension("json");
    fs::write(&csv_path, fooling_csv(report)?)?;
    fs::write(&json_path, fooling_json(report)?)?;
    Ok([csv_path, json_path])
}

pub fn read_fooling_json(path: &Path) -> Result<FoolingReport, ExportError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Writes `distortion_{timestamp}.csv` and `.json` into `dir`.
pub fn write_distortion_report(
    dir: &Path,
    report: &DistortionReport,
    timestamp: &str,
) -> Result<[PathBuf; 2], ExportError> {
    let stem = dir.join(format!("distortion_{timestamp}"));
    let csv_path = stem.with_extension("csv");
    let json_path = stem.with_extension("json");
    fs::write(&csv_path, distortion_csv(report)?)?;
    fs::write(&json_path, distortion_json(report)?)?;
    Ok([csv_path, json_path])
}

/// Human-readable table of a fooling report, percentages with two decimals.
pub fn fooling_table(report: &FoolingReport) -> String {
    let mut out = String::new();
    let pct = |c: &str| c.parse::<f64>().map(|v| format!("{:.2}", 100.0 * v)).unwrap_or_else(|_| "-".into());
    let _ = writeln!(
        out,
        "{:<8} {:>9} {:>9} {:>9} {:>9} {:>8}",
        "class", "A train", "A valid", "B train", "B valid", "dB"
    );
    for row in report.rows.iter().chain([&report.total]) {
        let c = row_cells(row);
        let db = row.mean_db.map(|d| format!("{d:.2}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<8} {:>9} {:>9} {:>9} {:>9} {:>8}",
            c[0],
            pct(&c[1]),
            pct(&c[2]),
            pct(&c[3]),
            pct(&c[4]),
            db
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use uap_core::attack::AttackConfig;
    use uap_core::report::{ReportMeta, SplitCells};
    use uap_core::ClassLabel;

    fn report() -> FoolingReport {
        let cells = |f, e| SplitCells {
            train: FoolCount { fooled: f, eligible: e },
            valid: FoolCount { fooled: 0, eligible: 0 },
        };
        let rows = vec![
            ReportRow {
                class: Some(ClassLabel::Yes),
                model_a: cells(1, 4),
                model_b: Some(cells(0, 4)),
                mean_db: Some(-36.43),
            },
            ReportRow {
                class: Some(ClassLabel::Left),
                model_a: cells(0, 2),
                model_b: Some(cells(0, 2)),
                mean_db: None,
            },
        ];
        FoolingReport {
            meta: ReportMeta {
                level: 2,
                classes: vec![ClassLabel::Yes, ClassLabel::Left],
                trials: 5,
                config: AttackConfig::default(),
            },
            total: ReportRow {
                class: None,
                model_a: cells(1, 6),
                model_b: Some(cells(0, 6)),
                mean_db: Some(-36.43),
            },
            rows,
        }
    }

    #[test]
    fn csv_layout() {
        let csv = fooling_csv(&report()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class,frA_train,frA_valid,frB_train,frB_valid,mean_db");
        assert_eq!(lines[1], "yes,0.25,,0,,-36.43");
        assert_eq!(lines[2], "left,0,,0,,");
        assert!(lines[3].starts_with("total,"));
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn json_round_trip() {
        let r = report();
        let back: FoolingReport = serde_json::from_str(&fooling_json(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
