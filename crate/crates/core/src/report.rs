//! Report files: JSON for machines, a markdown table for people.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::SuiteMetrics;
use crate::pipeline::RunReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
    Both,
}

pub const JSON_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "report.md";

const HEADER: [&str; 7] = ["VR", "LC", "MS", "P", "R", "F1", "#Tests"];

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", x * 100.0))
}

fn row(name: &str, m: Option<&SuiteMetrics>) -> String {
    let cells = match m {
        Some(m) => [
            pct(m.vr),
            pct(Some(m.lc)),
            pct(m.ms),
            pct(m.precision),
            pct(m.recall),
            pct(m.f1),
            m.counts.n_tests.to_string(),
        ],
        None => std::array::from_fn(|_| "-".to_string()),
    };
    format!("| {name} | {} |", cells.join(" | "))
}

fn section(out: &mut String, title: &str, reports: &[&RunReport], pick: fn(&RunReport) -> Option<&SuiteMetrics>) {
    let _ = writeln!(out, "### {title}\n");
    let _ = writeln!(out, "| Configuration | {} |", HEADER.join(" | "));
    let _ = writeln!(out, "|---|{}", "---:|".repeat(HEADER.len()));
    for r in reports {
        let name = format!("{} / {} ({})", r.config.strategy, r.config.generator, r.ablation);
        let _ = writeln!(out, "{}", row(&name, pick(r)));
    }
    out.push('\n');
}

/// Markdown table with one row per (strategy, generator), percentages with two
/// decimals, and `-` for absent values.
pub fn render_table(reports: &[&RunReport]) -> String {
    let mut out = String::new();
    section(&mut out, "Filtered suite", reports, |r| r.post_filter.as_ref());
    section(&mut out, "Unfiltered suite", reports, |r| r.pre_filter.as_ref());
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| r.failed_tasks().into_iter().map(move |t| format!("{} ({})", t, r.label)))
        .collect();
    if !failed.is_empty() {
        let _ = writeln!(out, "Failed tasks: {}", failed.join(", "));
    }
    let requests: Vec<String> = reports.iter().map(|r| format!("{}: {}", r.label, r.requests)).collect();
    let _ = writeln!(out, "Requests: {}", requests.join(", "));
    out
}

pub fn to_json(report: &RunReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes the report into `dir` and returns the files written.
pub fn emit_report(report: &RunReport, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if matches!(format, ReportFormat::Json | ReportFormat::Both) {
        let p = dir.join(JSON_FILE);
        std::fs::write(&p, to_json(report)?).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    if matches!(format, ReportFormat::Markdown | ReportFormat::Both) {
        let p = dir.join(TABLE_FILE);
        std::fs::write(&p, render_table(&[report])).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}
