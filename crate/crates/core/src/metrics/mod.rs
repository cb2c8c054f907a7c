//! Per-class precision, recall and F1 with micro and macro averaging.
//!
//! Every ratio with a zero denominator is defined as 0, which keeps the
//! aggregates defined for classes that are never predicted or never gold.

mod report;

pub use report::{render_summary, render_table, MetricsReport, ReportRow};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("gold and predicted lists differ in length ({gold} vs {pred})")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("cannot average an empty list of classes")]
    Empty,
    #[error("no prediction for gold example(s): {}", .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("prediction(s) for unknown example(s): {}", .0.join(", "))]
    ExtraPredictions(Vec<String>),
    #[error("duplicate id {0:?}")]
    Duplicate(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub class_label: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// An averaged (precision, recall, f1) triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// How the macro F1 is formed from per-class results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroF1Mode {
    /// Unweighted mean of the per-class F1 values.
    #[default]
    MeanOfF1,
    /// Harmonic mean of macro precision and macro recall.
    HmeanOfMacroPr,
}

impl fmt::Display for MacroF1Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MacroF1Mode::MeanOfF1 => "mean_of_f1",
            MacroF1Mode::HmeanOfMacroPr => "hmean_of_macro_pr",
        })
    }
}

impl FromStr for MacroF1Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mean_of_f1" => Ok(MacroF1Mode::MeanOfF1),
            "hmean_of_macro_pr" => Ok(MacroF1Mode::HmeanOfMacroPr),
            other => Err(format!("unknown macro_f1_mode {other:?}")),
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `2 / (p⁻¹ + r⁻¹)`, or 0 unless both inputs are positive.
pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p > 0.0 && r > 0.0 {
        2.0 / (p.recip() + r.recip())
    } else {
        0.0
    }
}

pub fn confusion_counts(
    golds: &[BTreeSet<String>],
    preds: &[BTreeSet<String>],
    class_label: &str,
) -> Result<ConfusionCounts> {
    if golds.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            gold: golds.len(),
            pred: preds.len(),
        });
    }
    let mut c = ConfusionCounts {
        class_label: class_label.to_string(),
        tp: 0,
        fp: 0,
        fn_: 0,
    };
    for (g, p) in golds.iter().zip(preds) {
        match (g.contains(class_label), p.contains(class_label)) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

pub fn prf(counts: &ConfusionCounts) -> ClassMetrics {
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    ClassMetrics {
        class_label: counts.class_label.clone(),
        precision,
        recall,
        f1: harmonic_mean(precision, recall),
    }
}

/// Pools the counts of all classes before computing the ratios.
pub fn micro_average(all_counts: &[ConfusionCounts]) -> Result<Aggregate> {
    if all_counts.is_empty() {
        return Err(MetricsError::Empty);
    }
    let tp: u64 = all_counts.iter().map(|c| c.tp).sum();
    let fp: u64 = all_counts.iter().map(|c| c.fp).sum();
    let fn_: u64 = all_counts.iter().map(|c| c.fn_).sum();
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(Aggregate {
        precision,
        recall,
        f1: harmonic_mean(precision, recall),
    })
}

/// Averages per-class ratios with equal weight per class.
pub fn macro_average(per_class: &[ClassMetrics], mode: MacroF1Mode) -> Result<Aggregate> {
    if per_class.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = per_class.len() as f64;
    let precision = per_class.iter().map(|m| m.precision).sum::<f64>() / n;
    let recall = per_class.iter().map(|m| m.recall).sum::<f64>() / n;
    let f1 = match mode {
        MacroF1Mode::MeanOfF1 => per_class.iter().map(|m| m.f1).sum::<f64>() / n,
        MacroF1Mode::HmeanOfMacroPr => harmonic_mean(precision, recall),
    };
    Ok(Aggregate {
        precision,
        recall,
        f1,
    })
}

/// Builds a full report for `labels` from parallel gold/predicted label sets.
pub fn report_from_sets(
    labels: &[String],
    golds: &[BTreeSet<String>],
    preds: &[BTreeSet<String>],
    mode: MacroF1Mode,
) -> Result<MetricsReport> {
    let counts = labels
        .iter()
        .map(|l| confusion_counts(golds, preds, l))
        .collect::<Result<Vec<_>>>()?;
    let per_class: Vec<ClassMetrics> = counts.iter().map(prf).collect();
    let micro = micro_average(&counts)?;
    let macro_ = macro_average(&per_class, mode)?;
    Ok(MetricsReport {
        per_class: counts
            .iter()
            .zip(&per_class)
            .map(|(c, m)| ReportRow {
                label: c.class_label.clone(),
                tp: c.tp,
                fp: c.fp,
                fn_: c.fn_,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
            })
            .collect(),
        micro,
        macro_,
        macro_f1_mode: mode,
    })
}

/// Joins gold and predicted labels by id and reports over `labels`.
///
/// Every gold id needs exactly one prediction and no prediction may refer to
/// an id outside the gold set.
pub fn evaluate(
    labels: &[String],
    gold: &[(String, BTreeSet<String>)],
    predicted: &[(String, BTreeSet<String>)],
    mode: MacroF1Mode,
) -> Result<MetricsReport> {
    let mut pred_by_id: BTreeMap<&str, &BTreeSet<String>> = BTreeMap::new();
    for (id, set) in predicted {
        if pred_by_id.insert(id, set).is_some() {
            return Err(MetricsError::Duplicate(id.clone()));
        }
    }
    let mut seen = BTreeSet::new();
    let mut missing = Vec::new();
    let mut golds = Vec::with_capacity(gold.len());
    let mut preds = Vec::with_capacity(gold.len());
    for (id, set) in gold {
        if !seen.insert(id.as_str()) {
            return Err(MetricsError::Duplicate(id.clone()));
        }
        match pred_by_id.get(id.as_str()) {
            Some(p) => {
                golds.push(set.clone());
                preds.push((*p).clone());
            }
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(MetricsError::MissingPredictions(missing));
    }
    let extra: Vec<String> = pred_by_id
        .keys()
        .filter(|id| !seen.contains(*id))
        .map(|id| id.to_string())
        .collect();
    if !extra.is_empty() {
        return Err(MetricsError::ExtraPredictions(extra));
    }
    report_from_sets(labels, &golds, &preds, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|x| x.to_string()).collect()
    }

    fn counts(tp: u64, fp: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts {
            class_label: "c".into(),
            tp,
            fp,
            fn_,
        }
    }

    #[test]
    fn counts_from_definitions() {
        let golds = [s(&["A"]), s(&["A"]), s(&["B"])];
        let preds = [s(&["A"]), s(&["B"]), s(&["A"])];
        let c = confusion_counts(&golds, &preds, "A").unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (1, 1, 1));
        let c = confusion_counts(&golds, &golds, "A").unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let c = confusion_counts(&[], &[], "A").unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (0, 0, 0));
        assert_eq!(
            confusion_counts(&golds, &preds[..2], "A"),
            Err(MetricsError::LengthMismatch { gold: 3, pred: 2 })
        );
    }

    #[test]
    fn prf_values() {
        let m = prf(&counts(2, 1, 1));
        assert_eq!(
            format!("{:.3}/{:.3}/{:.3}", m.precision, m.recall, m.f1),
            "0.667/0.667/0.667"
        );
        let m = prf(&counts(0, 0, 0));
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        let m = prf(&counts(1, 0, 0));
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn micro_examples() {
        // pooled: tp=1, fp=1, fn=1
        let m = micro_average(&[counts(1, 1, 0), counts(0, 0, 1)]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
        let single = counts(3, 1, 2);
        let m = micro_average(std::slice::from_ref(&single)).unwrap();
        let c = prf(&single);
        assert_eq!((m.precision, m.recall, m.f1), (c.precision, c.recall, c.f1));
        let m = micro_average(&[counts(0, 0, 0), counts(0, 0, 0)]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert_eq!(micro_average(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn macro_examples() {
        let rows = [
            ClassMetrics {
                class_label: "a".into(),
                precision: 0.5,
                recall: 1.0,
                f1: 2.0 / 3.0,
            },
            ClassMetrics {
                class_label: "b".into(),
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            },
        ];
        let m = macro_average(&rows, MacroF1Mode::MeanOfF1).unwrap();
        assert_eq!((m.precision, m.recall), (0.25, 0.5));
        assert!((m.f1 - 1.0 / 3.0).abs() < 1e-12);
        let h = macro_average(&rows, MacroF1Mode::HmeanOfMacroPr).unwrap();
        assert!((h.f1 - harmonic_mean(0.25, 0.5)).abs() < 1e-15);
        for mode in [MacroF1Mode::MeanOfF1, MacroF1Mode::HmeanOfMacroPr] {
            let one = macro_average(&rows[..1], mode).unwrap();
            assert_eq!((one.precision, one.recall), (0.5, 1.0));
            assert!((one.f1 - 2.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(
            macro_average(&[], MacroF1Mode::MeanOfF1),
            Err(MetricsError::Empty)
        );
    }

    #[test]
    fn evaluate_joins_by_id() {
        let labels = vec!["A".to_string(), "B".to_string()];
        let gold = vec![("x".to_string(), s(&["A"])), ("y".to_string(), s(&["B"]))];
        let r = evaluate(&labels, &gold, &gold, MacroF1Mode::MeanOfF1).unwrap();
        assert!(r.per_class.iter().all(|c| c.f1 == 1.0));
        assert_eq!(r.micro.f1, 1.0);
        assert_eq!(r.macro_.f1, 1.0);

        let empty = vec![("x".to_string(), s(&[])), ("y".to_string(), s(&[]))];
        let r = evaluate(&labels, &gold, &empty, MacroF1Mode::MeanOfF1).unwrap();
        assert!(r.per_class.iter().all(|c| c.recall == 0.0));

        let err = evaluate(&labels, &gold, &gold[..1], MacroF1Mode::MeanOfF1).unwrap_err();
        assert_eq!(err, MetricsError::MissingPredictions(vec!["y".into()]));
        let mut extra = gold.clone();
        extra.push(("z".into(), s(&["A"])));
        let err = evaluate(&labels, &gold, &extra, MacroF1Mode::MeanOfF1).unwrap_err();
        assert_eq!(err, MetricsError::ExtraPredictions(vec!["z".into()]));
    }
}
