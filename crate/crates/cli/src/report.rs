use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use embia::Summary;
use serde::Serialize;

use crate::harness::{bin_of, Comparison, ExperimentReport, SweepResult};
use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
    Table,
}

pub const BIN_RULE: &str = "bins: objective rounded to the nearest integer, halves rounded up";

fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Pads every column to a common width, right-aligned.
fn align_columns(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(
                |(c, cell)| {
                    if c == 0 {
                        format!("{cell:<w$}", w = widths[0])
                    } else {
                        format!("{cell:>w$}", w = widths[c])
                    }
                },
            )
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// One row per experiment over the union of all bins, in the layout of a
/// restart-distribution table.
fn histogram_table(reports: &[ExperimentReport]) -> String {
    let bins: BTreeSet<i64> = reports.iter().flat_map(|r| r.distribution.bins.keys().copied()).collect();
    let any_failed = reports.iter().any(|r| r.distribution.failed > 0);
    let mut header = vec!["init".to_string()];
    header.extend(bins.iter().map(i64::to_string));
    if any_failed {
        header.push("failed".into());
    }
    let mut rows = vec![header];
    for r in reports {
        let mut row = vec![r.label.clone()];
        row.extend(bins.iter().map(|&b| r.distribution.bin_count(b).to_string()));
        if any_failed {
            row.push(r.distribution.failed.to_string());
        }
        rows.push(row);
    }
    let mut out = format!("# {BIN_RULE}\n");
    for r in reports {
        let d = &r.distribution;
        let best = d.best.map_or("none".to_string(), |b| format!("{b:.4}"));
        let _ = writeln!(
            out,
            "# {}: best {best}, attained {}/{}, spurious {}, failed {}",
            r.label,
            d.attained,
            d.repetitions,
            d.spurious_values.len(),
            d.failed
        );
    }
    out.push_str(&align_columns(&rows));
    out
}

fn runs_csv(reports: &[ExperimentReport]) -> String {
    let timing = reports.iter().flat_map(|r| &r.runs).any(|run| run.elapsed_ms.is_some());
    let mut out = String::from("label,repetition,objective,bin,iterations,converged,spurious,boundary_adjacent,inner_loop_capped,collapsed,error");
    if timing {
        out.push_str(",elapsed_ms");
    }
    out.push('\n');
    for r in reports {
        for run in &r.runs {
            let (obj, bin) =
                run.objective.map_or((String::new(), String::new()), |v| (v.to_string(), bin_of(v).to_string()));
            let f = run.flags;
            let error = run.error.as_deref().unwrap_or("").replace(['"', ','], " ");
            let _ = write!(
                out,
                "{},{},{obj},{bin},{},{},{},{},{},{},{error}",
                r.label,
                run.repetition,
                run.iterations,
                run.converged,
                f.spurious_candidate,
                f.boundary_adjacent,
                f.inner_loop_capped,
                f.collapsed
            );
            if timing {
                let _ = write!(out, ",{}", run.elapsed_ms.map_or(String::new(), |t| format!("{t:.3}")));
            }
            out.push('\n');
        }
    }
    out
}

/// Renders experiment results. JSON carries every run in full (traces,
/// parameters, flags); CSV has one line per run; table text has one binned
/// histogram row per experiment.
pub fn render_report(reports: &[ExperimentReport], format: ReportFormat) -> Result<String, HarnessError> {
    if reports.is_empty() {
        return Err(HarnessError::Validation("no results to report".into()));
    }
    Ok(match format {
        ReportFormat::Json => to_json(reports),
        ReportFormat::Csv => runs_csv(reports),
        ReportFormat::Table => histogram_table(reports),
    })
}

pub fn render_sweep(result: &SweepResult, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => to_json(result),
        ReportFormat::Csv => result.to_delimited(','),
        ReportFormat::Table => {
            let mut rows = vec![std::iter::once(format!("{}\\{}", result.row_name, result.col_name))
                .chain(result.cols.iter().map(f64::to_string))
                .collect::<Vec<_>>()];
            for (r, cells) in result.rows.iter().zip(&result.cells) {
                let mut row = vec![r.to_string()];
                row.extend(cells.iter().map(|c| match c.objective {
                    Some(v) => format!("{v:.2}{}", if c.saddle { "s" } else { "" }),
                    None => "NA".into(),
                }));
                rows.push(row);
            }
            format!(
                "# best objective per cell; suffix s marks a saddle (coincident components)\n{}",
                align_columns(&rows)
            )
        }
    }
}

pub fn render_comparison(cmp: &Comparison, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => to_json(cmp),
        ReportFormat::Csv => {
            let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
            format!(
                "objective_a,objective_b,changes,wss_a,wss_b\n{},{},{},{},{}\n",
                cmp.objective_a,
                cmp.objective_b,
                cmp.changes,
                opt(cmp.wss_a),
                opt(cmp.wss_b)
            )
        }
        ReportFormat::Table => {
            let mut out = String::new();
            let _ = writeln!(out, "objective a   {:.4}", cmp.objective_a);
            let _ = writeln!(out, "objective b   {:.4}", cmp.objective_b);
            let _ = writeln!(out, "changes       {}", cmp.changes);
            if let (Some(a), Some(b)) = (cmp.wss_a, cmp.wss_b) {
                let _ = writeln!(out, "wss a         {a:.2}");
                let _ = writeln!(out, "wss b         {b:.2}");
            }
            let idx: Vec<String> = cmp.changed.iter().map(|i| (i + 1).to_string()).collect();
            let _ = writeln!(out, "changed rows  {}", idx.join(" "));
            out
        }
    }
}

pub fn render_summary(summary: &Summary, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => to_json(summary),
        ReportFormat::Csv | ReportFormat::Table => {
            let mut out = format!("kind,{}\nn,{}\nm,{}\n", summary.kind, summary.n, summary.m);
            if let (Some(e), Some(d)) = (summary.edges, summary.density) {
                let _ = write!(out, "edges,{e}\ndensity,{d}\n");
            }
            for (j, mean) in summary.column_means.iter().enumerate() {
                let name =
                    summary.column_ids.as_ref().map_or_else(|| format!("column_{}", j + 1), |ids| ids[j].clone());
                let _ = writeln!(out, "mean {name},{mean}");
            }
            out
        }
    }
}

/// Writes rendered output, echoing the path in any error.
pub fn write_output(text: &str, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

/// Renders and writes experiment results.
pub fn emit_report(reports: &[ExperimentReport], format: ReportFormat, path: &Path) -> Result<(), HarnessError> {
    write_output(&render_report(reports, format)?, path)
}
