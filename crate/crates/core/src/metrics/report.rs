use serde::{Deserialize, Serialize};

use super::{Aggregate, MacroF1Mode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Layout of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ReportRow>,
    pub micro: Aggregate,
    #[serde(rename = "macro")]
    pub macro_: Aggregate,
    pub macro_f1_mode: MacroF1Mode,
}

/// A fraction rendered as a percentage with one decimal.
pub fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

fn width(names: impl Iterator<Item = usize>, header: usize) -> usize {
    names.max().unwrap_or(0).max(header)
}

/// Aligned text rendering of a report: one row per class followed by the
/// micro and macro rows.
pub fn render_table(report: &MetricsReport) -> String {
    let w = width(
        report
            .per_class
            .iter()
            .map(|r| r.label.chars().count())
            .chain(["Micro Average".len(), "Macro Average".len()]),
        "Class".len(),
    );
    let mut out = format!(
        "{:<w$}  {:>6} {:>6} {:>6}  {:>9} {:>6} {:>8}\n",
        "Class", "TP", "FP", "FN", "Precision", "Recall", "F1-score"
    );
    for r in &report.per_class {
        out.push_str(&format!(
            "{:<w$}  {:>6} {:>6} {:>6}  {:>9} {:>6} {:>8}\n",
            r.label,
            r.tp,
            r.fp,
            r.fn_,
            pct(r.precision),
            pct(r.recall),
            pct(r.f1)
        ));
    }
    for (name, agg) in [
        ("Micro Average", report.micro),
        ("Macro Average", report.macro_),
    ] {
        out.push_str(&format!(
            "{:<w$}  {:>6} {:>6} {:>6}  {:>9} {:>6} {:>8}\n",
            name,
            "",
            "",
            "",
            pct(agg.precision),
            pct(agg.recall),
            pct(agg.f1)
        ));
    }
    out.push_str(&format!("macro F1 mode: {}\n", report.macro_f1_mode));
    out
}

/// Renders named aggregate rows (e.g. one row per model variant) as
/// `name  precision  recall  f1`, percentages to one decimal.
pub fn render_summary(rows: &[(String, Aggregate)]) -> String {
    let w = width(rows.iter().map(|(n, _)| n.chars().count()), "Model".len());
    let mut out = format!(
        "{:<w$}  {:>9} {:>6} {:>6}\n",
        "Model", "Precision", "Recall", "F1"
    );
    for (name, a) in rows {
        out.push_str(&format!(
            "{:<w$}  {:>9} {:>6} {:>6}\n",
            name,
            pct(a.precision),
            pct(a.recall),
            pct(a.f1)
        ));
    }
    out
}
