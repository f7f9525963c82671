use std::fmt::Write;
use std::path::{Path, PathBuf};

use super::record::{records_to_csv, TrialRecord};
use super::stats::summarize;
use crate::error::{Error, Result};

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.md";

/// Files written for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub figures: Vec<PathBuf>,
    /// Markdown summary, as written.
    pub markdown: String,
    /// Per-group summary as CSV (cell, variant, solver, rate, ...).
    pub summary_csv: String,
}

/// Everything the renderer needs besides the records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportContext {
    pub title: String,
    pub reproduce: String,
    pub config_echo: String,
    /// Experiment-specific sections (heading, markdown body).
    pub sections: Vec<(String, String)>,
    /// Figures (file stem, SVG text); written only when requested.
    pub figures: Vec<(String, String)>,
}

pub const SUMMARY_CSV_HEADER: &str =
    "cell,variant,solver,m,k,n,rows,successes,rate,mean_ops,mean_stability,regime";

pub fn summary_csv(records: &[TrialRecord]) -> String {
    let mut s = String::from(SUMMARY_CSV_HEADER);
    s.push('\n');
    for g in summarize(records) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            g.cell,
            g.variant,
            g.solver,
            g.m,
            g.k,
            g.n,
            g.rows,
            g.successes,
            g.rate(),
            g.mean_ops.map(|v| v.to_string()).unwrap_or_default(),
            g.mean_stability.map(|v| v.to_string()).unwrap_or_default(),
            g.regime
        );
    }
    s
}

pub fn summary_markdown(records: &[TrialRecord], ctx: &ReportContext) -> String {
    let mut s = format!("# {}\n\n", ctx.title);
    let _ = writeln!(s, "Reproduce with:\n\n```\n{}\n```\n", ctx.reproduce);
    let _ = writeln!(s, "{} records.\n", records.len());
    for (heading, body) in &ctx.sections {
        let _ = writeln!(s, "## {heading}\n\n{}\n", body.trim_end());
    }
    s.push_str("## Per-cell rates\n\n");
    s.push_str("| cell | variant | solver | rows | successes | rate | mean ops | mean ‖x̂−x‖/ε |\n");
    s.push_str("|---|---|---|---|---|---|---|---|\n");
    let groups = summarize(records);
    if groups.is_empty() {
        s.push_str("| no data | | | | | | | |\n");
    }
    for g in groups {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {:.3} | {} | {} |",
            g.cell,
            g.variant,
            if g.solver.is_empty() { "-" } else { &g.solver },
            g.rows,
            g.successes,
            g.rate(),
            g.mean_ops.map_or("-".to_string(), |v| format!("{v:.0}")),
            g.mean_stability.map_or("-".to_string(), |v| format!("{v:.4}")),
        );
    }
    let _ = writeln!(s, "\n## Configuration\n\n```toml\n{}```", ctx.config_echo);
    s
}

/// Writes records.csv, summary.md and, if `figures`, one SVG per figure.
pub fn render_report(
    records: &[TrialRecord],
    ctx: &ReportContext,
    out_dir: &Path,
    figures: bool,
) -> Result<ReportBundle> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, text: &str| -> Result<PathBuf> {
        let path = out_dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };
    let markdown = summary_markdown(records, ctx);
    let records_path = write(RECORDS_FILE, &records_to_csv(records)?)?;
    let summary = write(SUMMARY_FILE, &markdown)?;
    let mut written = Vec::new();
    if figures {
        for (stem, svg) in &ctx.figures {
            written.push(write(&format!("{stem}.svg"), svg)?);
        }
    }
    Ok(ReportBundle {
        records: records_path,
        summary,
        figures: written,
        markdown,
        summary_csv: summary_csv(records),
    })
}
