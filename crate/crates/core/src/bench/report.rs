use std::fmt::Write as _;

use super::{BenchEntry, BenchReport};
use crate::error::{Error, Result};

/// Rounds to 9 significant decimal digits, the precision of the CSV.
pub fn round_sig(v: f64) -> f64 {
    format!("{v:.8e}").parse().expect("formatted float parses")
}

pub fn render_table(report: &BenchReport) -> String {
    let w = report
        .entries
        .iter()
        .map(|e| e.variant.len())
        .max()
        .unwrap_or(0)
        .max("variant".len());
    let mut s = String::new();
    writeln!(s, "{:<w$}  {:>7}  {:>15}  {:>15}", "variant", "threads", "median_seconds", "speedup").unwrap();
    for e in &report.entries {
        writeln!(s, "{:<w$}  {:>7}  {:>15.8e}  {:>15.8e}", e.variant, e.threads, e.median_seconds, e.speedup).unwrap();
    }
    writeln!(s, "cpu: {} ({} threads available)", report.cpu_model, report.available_threads).unwrap();
    for warn in &report.warnings {
        writeln!(s, "warning: {warn}").unwrap();
    }
    s
}

pub fn report_csv(report: &BenchReport) -> String {
    let mut s = String::from("variant,threads,median_seconds,speedup\n");
    for e in &report.entries {
        writeln!(s, "{},{},{:.8e},{:.8e}", e.variant, e.threads, e.median_seconds, e.speedup).unwrap();
    }
    s
}

/// Text table and CSV.
pub fn render_report(report: &BenchReport) -> Result<(String, String)> {
    if report.entries.is_empty() {
        return Err(Error::Data("empty benchmark report".into()));
    }
    Ok((render_table(report), report_csv(report)))
}

pub fn parse_report_csv(text: &str) -> Result<Vec<BenchEntry>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::format("row", e.position().map_or(0, |p| p.byte()), e.to_string()))?;
        let at = row.position().map_or(0, |p| p.byte());
        let num = |i: usize, field: &str| -> Result<f64> {
            row.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format(field, at, "not a number"))
        };
        out.push(BenchEntry {
            variant: row.get(0).unwrap_or_default().to_string(),
            threads: row
                .get(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format("threads", at, "not an integer"))?,
            median_seconds: num(2, "median_seconds")?,
            speedup: num(3, "speedup")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::build_report;

    #[test]
    fn csv_round_trip_exact() {
        let r = build_report(vec![
            ("direct".into(), 1, 0.012345678912345),
            ("gemm".into(), 1, 0.0009876543219876),
            ("threaded".into(), 4, 3.3e-4),
        ])
        .unwrap();
        let (table, csv) = render_report(&r).unwrap();
        assert_eq!(parse_report_csv(&csv).unwrap(), r.entries);
        assert!(table.lines().count() >= 4);
        let s: Vec<f64> = r.entries.iter().map(|e| e.speedup).collect();
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn single_row() {
        let r = build_report(vec![("gemm".into(), 1, 2.0)]).unwrap();
        let (table, csv) = render_report(&r).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(table.lines().filter(|l| l.starts_with("gemm")).count(), 1);
    }
}
