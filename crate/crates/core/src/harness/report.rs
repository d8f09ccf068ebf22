//! Tables for papers and plots from an ensemble summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::ensemble::EnsembleSummary;
use crate::error::{Error, Result};

fn cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6e}")).unwrap_or_default()
}

/// One row per `(N, stopping time)` with a 95% normal interval and, when a
/// fit is present, the ratio to the bound shape.
pub fn report_csv(summary: &EnsembleSummary) -> String {
    let mut out = String::from("stopping_time,n,count_hit,censoring_rate,mean,ci_low,ci_high,q50,ratio\n");
    for key in &summary.stopping_times {
        for (n, s) in summary.series_for(key) {
            let ci = s.mean.zip(s.stderr).map(|(m, e)| (m - 1.96 * e, m + 1.96 * e));
            let ratio = summary
                .fit
                .as_ref()
                .filter(|f| &f.stopping_time == key)
                .and_then(|f| f.rows.iter().find(|r| r.n == n))
                .map(|r| r.ratio);
            let _ = writeln!(
                out,
                "\"{key}\",{n},{},{:.4},{},{},{},{},{}",
                s.count_hit,
                s.censoring_rate,
                cell(s.mean),
                cell(ci.map(|c| c.0)),
                cell(ci.map(|c| c.1)),
                cell(s.q50),
                cell(ratio),
            );
        }
    }
    out
}

/// Whitespace-separated blocks, one per stopping time, separated by two
/// blank lines so gnuplot can select them with `index`.
pub fn report_dat(summary: &EnsembleSummary) -> String {
    let mut out = String::new();
    for (i, key) in summary.stopping_times.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let _ = writeln!(out, "# index {i}: {key}");
        out.push_str("# N mean stderr q10 q50 q90\n");
        for (n, s) in summary.series_for(key) {
            let Some(mean) = s.mean else { continue };
            let _ = writeln!(
                out,
                "{n} {mean:.6e} {:.6e} {} {} {}",
                s.stderr.unwrap_or(0.0),
                cell(s.q10),
                cell(s.q50),
                cell(s.q90)
            );
        }
    }
    out
}

/// Writes `report.csv`, and `report.dat` when `dat` is set.
pub fn write_report(summary: &EnsembleSummary, dir: &Path, dat: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("report.csv");
    fs::write(&csv, report_csv(summary)).map_err(|e| Error::io(&csv, e))?;
    if dat {
        let path = dir.join("report.dat");
        fs::write(&path, report_dat(summary)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
