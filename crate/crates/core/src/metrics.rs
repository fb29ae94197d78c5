//! Balanced accuracy, error rates and Krippendorff's alpha.
//!
//! The positive class is "contains a faithfulness error" (Unfaithful).

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambiguity::{filter_ambiguous, AmbiguityError, VerdictSource};
use crate::domain::{EvaluationRecord, FaithfulnessLabel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {min} items, got {got}")]
    TooFew { min: usize, got: usize },
    #[error("{0} is undefined: the class it conditions on is absent")]
    UndefinedRate(&'static str),
    #[error("all values identical; expected disagreement is zero")]
    DegenerateData,
    #[error("record {0} has no prediction or gold label")]
    MissingLabel(String),
    #[error("ambiguity filtering failed: {0}")]
    Filter(String),
}

impl From<AmbiguityError> for MetricsError {
    fn from(e: AmbiguityError) -> Self {
        MetricsError::Filter(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(preds: &[FaithfulnessLabel], golds: &[FaithfulnessLabel]) -> Result<ConfusionCounts, MetricsError> {
    confusion_flags(&error_flags(preds), &error_flags(golds))
}

/// Confusion over positive/negative flags (`true` = positive).
pub fn confusion_flags(preds: &[bool], golds: &[bool]) -> Result<ConfusionCounts, MetricsError> {
    if preds.len() != golds.len() {
        return Err(MetricsError::LengthMismatch { left: preds.len(), right: golds.len() });
    }
    if preds.is_empty() {
        return Err(MetricsError::TooFew { min: 1, got: 0 });
    }
    let mut c = ConfusionCounts::default();
    for (p, g) in preds.iter().zip(golds) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn error_flags(labels: &[FaithfulnessLabel]) -> Vec<bool> {
    labels.iter().map(|l| l.is_error()).collect()
}

/// fp / (fp + tn)
pub fn false_positive_rate(c: &ConfusionCounts) -> Result<f64, MetricsError> {
    let neg = c.fp + c.tn;
    if neg == 0 {
        return Err(MetricsError::UndefinedRate("FPR"));
    }
    Ok(c.fp as f64 / neg as f64)
}

/// fn / (fn + tp)
pub fn false_negative_rate(c: &ConfusionCounts) -> Result<f64, MetricsError> {
    let pos = c.fn_ + c.tp;
    if pos == 0 {
        return Err(MetricsError::UndefinedRate("FNR"));
    }
    Ok(c.fn_ as f64 / pos as f64)
}

/// 1 - (FPR + FNR) / 2
pub fn balanced_accuracy(c: &ConfusionCounts) -> Result<f64, MetricsError> {
    Ok(1.0 - (false_positive_rate(c)? + false_negative_rate(c)?) / 2.0)
}

/// Nominal alpha for two raters with no missing values:
/// `1 - (n - 1) * sum_{c != k} o_ck / sum_{c != k} n_c * n_k`, where `o` is the
/// coincidence matrix over the `n = 2 * units` pairable values.
pub fn krippendorff_alpha<T: Eq + Hash + Clone>(rater_a: &[T], rater_b: &[T]) -> Result<f64, MetricsError> {
    if rater_a.len() != rater_b.len() {
        return Err(MetricsError::LengthMismatch { left: rater_a.len(), right: rater_b.len() });
    }
    if rater_a.len() < 2 {
        return Err(MetricsError::TooFew { min: 2, got: rater_a.len() });
    }
    let mut marginals: HashMap<T, u64> = HashMap::new();
    let mut disagreements = 0u64;
    for (a, b) in rater_a.iter().zip(rater_b) {
        *marginals.entry(a.clone()).or_default() += 1;
        *marginals.entry(b.clone()).or_default() += 1;
        if a != b {
            disagreements += 2; // o_ab and o_ba
        }
    }
    let n = 2 * rater_a.len() as u64;
    let same: u64 = marginals.values().map(|&m| m * m).sum();
    let expected_pairs = n * n - same;
    if expected_pairs == 0 {
        return Err(MetricsError::DegenerateData);
    }
    Ok(1.0 - ((n - 1) as f64 * disagreements as f64) / expected_pairs as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub confusion: ConfusionCounts,
    pub balanced_accuracy: f64,
    pub fpr: f64,
    pub fnr: f64,
    /// `None` when both raters use a single label throughout.
    pub krippendorff_alpha: Option<f64>,
}

pub fn report(preds: &[FaithfulnessLabel], golds: &[FaithfulnessLabel]) -> Result<MetricReport, MetricsError> {
    report_flags(&error_flags(preds), &error_flags(golds))
}

/// [`report`] over positive/negative flags, e.g. ambiguity verdicts against annotations.
pub fn report_flags(preds: &[bool], golds: &[bool]) -> Result<MetricReport, MetricsError> {
    let c = confusion_flags(preds, golds)?;
    let alpha = match krippendorff_alpha(preds, golds) {
        Ok(a) => Some(a),
        Err(MetricsError::DegenerateData) | Err(MetricsError::TooFew { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        n: preds.len(),
        confusion: c,
        balanced_accuracy: balanced_accuracy(&c)?,
        fpr: false_positive_rate(&c)?,
        fnr: false_negative_rate(&c)?,
        krippendorff_alpha: alpha,
    })
}

/// Metrics over every record and over the records kept by ambiguity filtering.
/// Each side fails independently.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredReport {
    pub unfiltered: Result<MetricReport, MetricsError>,
    pub filtered: Result<MetricReport, MetricsError>,
    pub removed: usize,
}

fn paired(
    records: &[EvaluationRecord],
    preds: &HashMap<String, FaithfulnessLabel>,
) -> Result<(Vec<FaithfulnessLabel>, Vec<FaithfulnessLabel>), MetricsError> {
    let mut p = Vec::with_capacity(records.len());
    let mut g = Vec::with_capacity(records.len());
    for r in records {
        let pred = preds.get(&r.record_id).ok_or_else(|| MetricsError::MissingLabel(r.record_id.clone()))?;
        let gold = r.gold_label.ok_or_else(|| MetricsError::MissingLabel(r.record_id.clone()))?;
        p.push(*pred);
        g.push(gold);
    }
    Ok((p, g))
}

pub fn filtered_report(
    records: &[EvaluationRecord],
    preds: &HashMap<String, FaithfulnessLabel>,
    source: VerdictSource<'_>,
) -> Result<FilteredReport, MetricsError> {
    let (kept, removed) = filter_ambiguous(records, source)?;
    let side = |rs: &[EvaluationRecord]| paired(rs, preds).and_then(|(p, g)| report(&p, &g));
    Ok(FilteredReport { unfiltered: side(records), filtered: side(&kept), removed: removed.len() })
}

/// `0.1234` → `"12.34"`.
pub fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

/// Plain-text table of one or more named reports.
pub fn render_table(rows: &[(String, Result<&MetricReport, String>)]) -> String {
    let mut out = format!("{:<40} {:>6} {:>8} {:>8} {:>8} {:>8}\n", "set", "n", "BAcc", "K-alpha", "FPR", "FNR");
    for (name, r) in rows {
        match r {
            Ok(m) => out.push_str(&format!(
                "{:<40} {:>6} {:>8} {:>8} {:>8} {:>8}\n",
                name,
                m.n,
                pct(m.balanced_accuracy),
                m.krippendorff_alpha.map(|a| format!("{a:.2}")).unwrap_or_else(|| "n/a".into()),
                pct(m.fpr),
                pct(m.fnr)
            )),
            Err(e) => out.push_str(&format!("{name:<40} error: {e}\n")),
        }
    }
    out
}
