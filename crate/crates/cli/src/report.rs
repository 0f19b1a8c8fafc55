//! CSV reports: per-case rows, Table-1 style summaries, and theory checks.

use std::path::Path;

use pdae_core::harness::{AggregateRow, EvalReport, EvalRow, TheoryCheck};

use crate::data::fmt_f64;
use crate::error::{CliError, CliResult};

fn label_field(a: &[f64]) -> String {
    a.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" ")
}

fn write_records<I>(path: &Path, header: &[&str], records: I) -> CliResult<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for r in records {
        w.write_record(&r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub const ROW_HEADER: [&str; 9] = ["seed", "method", "case_id", "kind", "arity", "label", "ed", "mmd2", "mean_diff"];

fn row_record(r: &EvalRow) -> Vec<String> {
    vec![
        r.seed.to_string(),
        r.method.as_str().to_string(),
        r.case_id.to_string(),
        r.kind.as_str().to_string(),
        r.arity.as_str().to_string(),
        label_field(r.label.as_slice()),
        fmt_f64(r.ed),
        fmt_f64(r.mmd2),
        fmt_f64(r.mean_diff),
    ]
}

pub fn write_rows(path: &Path, rows: &[EvalRow]) -> CliResult<()> {
    write_records(path, &ROW_HEADER, rows.iter().map(row_record))
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "method",
    "kind",
    "seeds",
    "cases",
    "ed_mean",
    "ed_std",
    "mmd2_mean",
    "mmd2_std",
    "mean_diff_mean",
    "mean_diff_std",
];

fn summary_record(a: &AggregateRow) -> Vec<String> {
    vec![
        a.method.as_str().to_string(),
        a.kind.as_str().to_string(),
        a.seeds.to_string(),
        a.cases.to_string(),
        fmt_f64(a.ed.mean),
        fmt_f64(a.ed.std),
        fmt_f64(a.mmd2.mean),
        fmt_f64(a.mmd2.std),
        fmt_f64(a.mean_diff.mean),
        fmt_f64(a.mean_diff.std),
    ]
}

pub fn write_summary(path: &Path, report: &EvalReport) -> CliResult<()> {
    write_records(path, &SUMMARY_HEADER, report.aggregate().iter().map(summary_record))
}

/// Fixed-width table for the terminal.
pub fn format_summary(report: &EvalReport) -> String {
    let mut s = format!(
        "{:<18} {:<4} {:>16} {:>16} {:>16}\n",
        "method", "kind", "ED", "MMD2", "mean diff"
    );
    for a in report.aggregate() {
        s.push_str(&format!(
            "{:<18} {:<4} {:>8.4}±{:<7.4} {:>8.4}±{:<7.4} {:>8.4}±{:<7.4}\n",
            a.method.as_str(),
            a.kind.as_str(),
            a.ed.mean,
            a.ed.std,
            a.mmd2.mean,
            a.mmd2.std,
            a.mean_diff.mean,
            a.mean_diff.std
        ));
    }
    s
}

/// `PASS name: statistic (detail)`.
pub fn check_line(c: &TheoryCheck) -> String {
    format!(
        "{} {}: {} ({})",
        if c.passed { "PASS" } else { "FAIL" },
        c.name,
        fmt_f64(c.statistic),
        c.detail
    )
}

pub fn write_checks(path: &Path, checks: &[TheoryCheck]) -> CliResult<()> {
    write_records(
        path,
        &["check", "passed", "statistic", "detail"],
        checks.iter().map(|c| {
            vec![
                c.name.clone(),
                c.passed.to_string(),
                fmt_f64(c.statistic),
                c.detail.clone(),
            ]
        }),
    )
}
