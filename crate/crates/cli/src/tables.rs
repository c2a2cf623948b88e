//! Results tables assembled from run directories: one row per run.

use std::path::PathBuf;

use crate::error::CliError;
use crate::pipeline::{read_report, read_timing};

pub const COLUMNS: [&str; 10] = [
    "dataset",
    "method",
    "auc_all",
    "auc_top50",
    "rmse_macro",
    "f1_micro",
    "coverage",
    "core_fraction",
    "bipartite_edge_fraction",
    "runtime_s",
];

/// Placeholder for a metric that does not apply or was not measured.
pub const MISSING: &str = "—";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Tsv,
    Markdown,
}

pub fn collect_rows(run_dirs: &[PathBuf]) -> Result<Vec<Vec<String>>, CliError> {
    let cell = |v: Option<f64>, digits: usize| v.map_or_else(|| MISSING.to_string(), |x| format!("{x:.digits$}"));
    run_dirs
        .iter()
        .map(|dir| {
            let r = read_report(dir)?;
            let runtime = read_timing(dir).map(|t| t.total_s);
            let e = &r.eval;
            Ok(vec![
                r.dataset,
                r.method,
                cell(e.auc_all, 2),
                cell(e.auc_top50, 2),
                cell(e.rmse_macro, 4),
                cell(e.f1_micro, 2),
                cell(e.coverage, 2),
                cell(e.core_fraction, 2),
                cell(e.bipartite_edge_fraction, 2),
                cell(runtime, 3),
            ])
        })
        .collect()
}

pub fn render(rows: &[Vec<String>], format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Tsv => {
            out.push_str(&COLUMNS.join("\t"));
            out.push('\n');
            for row in rows {
                out.push_str(&row.join("\t"));
                out.push('\n');
            }
        }
        Format::Markdown => {
            out.push_str(&format!("| {} |\n", COLUMNS.join(" | ")));
            out.push_str(&format!("|{}\n", "---|".repeat(COLUMNS.len())));
            for row in rows {
                out.push_str(&format!("| {} |\n", row.join(" | ")));
            }
        }
    }
    out
}

pub fn export_tables(run_dirs: &[PathBuf], format: Format) -> Result<String, CliError> {
    Ok(render(&collect_rows(run_dirs)?, format))
}
