//! Evaluation and ablation reports as plain-text tables and JSON lines.

use serde::Serialize;

use mmdmap::evaluator::SimilarityReport;
use mmdmap::pipeline::AblationRow;
use mmdmap::BliReport;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum ReportLine {
    Bli {
        method: String,
        p_at_1: f64,
        p_at_5: f64,
        n_evaluated: usize,
        n_skipped_oov: usize,
    },
    BliBucket {
        bucket: String,
        cutoff: usize,
        p_at_1: f64,
        n_evaluated: usize,
    },
    Similarity {
        pearson: f64,
        n_used: usize,
        n_skipped_oov: usize,
    },
    Ablation {
        setting: String,
        init: bool,
        mmd: bool,
        refine: bool,
        converged: bool,
        p_at_1: Option<f64>,
        p_at_5: Option<f64>,
        detail: Option<String>,
    },
}

pub fn bli_lines(rep: &BliReport, method: &str) -> Vec<ReportLine> {
    let mut lines = vec![ReportLine::Bli {
        method: method.to_owned(),
        p_at_1: rep.p_at_1,
        p_at_5: rep.p_at_5,
        n_evaluated: rep.n_evaluated,
        n_skipped_oov: rep.n_skipped_oov,
    }];
    for (name, stat) in [("common", rep.buckets.common), ("rare", rep.buckets.rare)] {
        if let Some(s) = stat {
            lines.push(ReportLine::BliBucket {
                bucket: name.to_owned(),
                cutoff: rep.buckets.cutoff,
                p_at_1: s.p_at_1,
                n_evaluated: s.n_evaluated,
            });
        }
    }
    lines
}

pub fn similarity_line(rep: &SimilarityReport) -> ReportLine {
    ReportLine::Similarity {
        pearson: rep.pearson,
        n_used: rep.n_used,
        n_skipped_oov: rep.n_skipped_oov,
    }
}

pub fn ablation_lines(rows: &[AblationRow]) -> Vec<ReportLine> {
    rows.iter()
        .map(|r| ReportLine::Ablation {
            setting: r.name.to_owned(),
            init: r.enable_init,
            mmd: r.enable_mmd,
            refine: r.enable_refine,
            converged: r.status.converged(),
            p_at_1: r.report.as_ref().map(|b| b.p_at_1),
            p_at_5: r.report.as_ref().map(|b| b.p_at_5),
            detail: match &r.status {
                mmdmap::pipeline::AlignStatus::NonConvergence(m) => Some(m.clone()),
                mmdmap::pipeline::AlignStatus::Converged => None,
            },
        })
        .collect()
}

pub fn to_json_lines(lines: &[ReportLine]) -> String {
    lines
        .iter()
        .map(|l| serde_json::to_string(l).expect("report lines serialize") + "\n")
        .collect()
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Two-column table of evaluation metrics.
pub fn evaluation_table(lines: &[ReportLine]) -> String {
    let mut rows: Vec<(String, String)> = Vec::new();
    for line in lines {
        match line {
            ReportLine::Bli {
                method,
                p_at_1,
                p_at_5,
                n_evaluated,
                n_skipped_oov,
            } => {
                rows.push((format!("BLI P@1 ({method})"), pct(*p_at_1)));
                rows.push((format!("BLI P@5 ({method})"), pct(*p_at_5)));
                rows.push(("BLI evaluated".into(), n_evaluated.to_string()));
                rows.push(("BLI skipped (OOV)".into(), n_skipped_oov.to_string()));
            }
            ReportLine::BliBucket {
                bucket,
                cutoff,
                p_at_1,
                n_evaluated,
            } => {
                let side = if bucket == "common" { "<" } else { ">=" };
                rows.push((format!("P@1 {bucket} (rank {side} {cutoff}, n={n_evaluated})"), pct(*p_at_1)));
            }
            ReportLine::Similarity {
                pearson,
                n_used,
                n_skipped_oov,
            } => {
                rows.push(("similarity Pearson r".into(), format!("{pearson:.4}")));
                rows.push(("similarity pairs used".into(), n_used.to_string()));
                rows.push(("similarity skipped (OOV)".into(), n_skipped_oov.to_string()));
            }
            ReportLine::Ablation { .. } => {}
        }
    }
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut out = format!("{:<width$}  value\n", "metric");
    for (k, v) in rows {
        out.push_str(&format!("{k:<width$}  {v}\n"));
    }
    out
}

/// Ablation table; non-converged rows show `*`.
pub fn ablation_table(lines: &[ReportLine]) -> String {
    let mut out = format!("{:<20}  {:>7}  {:>7}  status\n", "setting", "P@1", "P@5");
    for line in lines {
        if let ReportLine::Ablation {
            setting,
            converged,
            p_at_1,
            p_at_5,
            ..
        } = line
        {
            let cell = |v: &Option<f64>| v.map_or_else(|| "*".to_owned(), pct);
            let status = if *converged { "converged" } else { "non-convergence" };
            out.push_str(&format!("{setting:<20}  {:>7}  {:>7}  {status}\n", cell(p_at_1), cell(p_at_5)));
        }
    }
    out
}

/// Whether P@1(full) ≥ P@1(w/o MMD) ≥ P@1(w/o refinement), or `None` if a
/// row is missing.
pub fn ablation_ordering_holds(rows: &[AblationRow]) -> Option<bool> {
    let p1 = |name: &str| rows.iter().find(|r| r.name == name)?.report.as_ref().map(|b| b.p_at_1);
    let (full, no_mmd, no_refine) = (p1("full")?, p1("w/o MMD")?, p1("w/o refinement")?);
    Some(full >= no_mmd && no_mmd >= no_refine)
}
