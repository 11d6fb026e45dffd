//! Confusion matrices, macro-averaged classification metrics and
//! cross-validation summaries.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

pub fn confusion(labels: &[usize], predictions: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if labels.len() != predictions.len() {
        return Err(invalid(format!("{} labels but {} predictions", labels.len(), predictions.len())));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&y, &p) in labels.iter().zip(predictions) {
        if y >= n_classes || p >= n_classes {
            return Err(invalid(format!("class index out of range: label {y}, prediction {p}, {n_classes} classes")));
        }
        counts[y][p] += 1;
    }
    Ok(ConfusionMatrix { n_classes, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    #[serde(rename = "prec")]
    pub precision: f64,
    #[serde(rename = "rec")]
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "acc")]
    pub accuracy: f64,
    #[serde(rename = "prec")]
    pub macro_precision: f64,
    #[serde(rename = "rec")]
    pub macro_recall: f64,
    #[serde(rename = "f1")]
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Per-class ratios with a zero denominator, each reported as 0.
    #[serde(skip)]
    pub undefined_ratios: usize,
}

fn ratio(num: f64, den: f64, undefined: &mut usize) -> f64 {
    if den == 0.0 {
        *undefined += 1;
        0.0
    } else {
        num / den
    }
}

pub fn report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(invalid("cannot report metrics on an empty confusion matrix"));
    }
    let n = cm.n_classes;
    let mut undefined = 0;
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|c| {
            let tp = cm.counts[c][c] as f64;
            let predicted: u64 = (0..n).map(|r| cm.counts[r][c]).sum();
            let actual: u64 = cm.counts[c].iter().sum();
            let precision = ratio(tp, predicted as f64, &mut undefined);
            let recall = ratio(tp, actual as f64, &mut undefined);
            let f1 = ratio(2.0 * precision * recall, precision + recall, &mut undefined);
            ClassMetrics { precision, recall, f1 }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    let trace: u64 = (0..n).map(|c| cm.counts[c][c]).sum();
    Ok(MetricsReport {
        accuracy: trace as f64 / total as f64,
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
        undefined_ratios: undefined,
    })
}

/// Mean and sample standard deviation of one metric across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Self {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: Vec<MetricsReport>,
    pub acc: MeanStd,
    pub prec: MeanStd,
    pub rec: MeanStd,
    pub f1: MeanStd,
}

pub fn summarize_cv(reports: &[MetricsReport]) -> Result<CvSummary> {
    if reports.len() < 2 {
        return Err(invalid(format!("need at least 2 folds to summarize, got {}", reports.len())));
    }
    let col = |f: fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(CvSummary {
        folds: reports.to_vec(),
        acc: col(|r| r.accuracy),
        prec: col(|r| r.macro_precision),
        rec: col(|r| r.macro_recall),
        f1: col(|r| r.macro_f1),
    })
}

impl CvSummary {
    /// One-line `acc/prec/rec/f1` percentages with their spread.
    pub fn table_row(&self) -> String {
        let cell = |m: MeanStd| format!("{:6.2} +/- {:5.2}", 100.0 * m.mean, 100.0 * m.std);
        format!("{} | {} | {} | {}", cell(self.acc), cell(self.prec), cell(self.rec), cell(self.f1))
    }
}

/// Index of the largest value, the lowest index among ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_sample_case() {
        let cm = confusion(&[0, 0, 1, 1, 2, 2], &[0, 1, 1, 1, 2, 0], 3).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1, 0], vec![0, 2, 0], vec![1, 0, 1]]);
        let r = report(&cm).unwrap();
        // per class P = (1/2, 2/3, 1), R = (1/2, 1, 1/2), F1 = (1/2, 4/5, 2/3)
        assert!((r.accuracy - 4.0 / 6.0).abs() < 1e-12);
        assert!((r.macro_precision - 13.0 / 18.0).abs() < 1e-12);
        assert!((r.macro_recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.macro_f1 - 59.0 / 90.0).abs() < 1e-12);
    }

    #[test]
    fn never_predicted_class() {
        let r = report(&confusion(&[0, 1], &[0, 0], 2).unwrap()).unwrap();
        assert_eq!(r.per_class[1].precision, 0.0);
        assert!(r.undefined_ratios > 0);
        assert!(r.macro_f1.is_finite());
        assert!(report(&confusion(&[], &[], 2).unwrap()).is_err());
    }

    #[test]
    fn summary() {
        let mut a = report(&confusion(&[0, 1, 1, 1, 0], &[0, 1, 1, 1, 1], 2).unwrap()).unwrap();
        a.accuracy = 0.8;
        let mut b = a.clone();
        b.accuracy = 1.0;
        let s = summarize_cv(&[a.clone(), b.clone()]).unwrap();
        assert!((s.acc.mean - 0.9).abs() < 1e-12);
        assert!((s.acc.std - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.prec.std, 0.0);
        assert!(summarize_cv(&[a]).is_err());
        let json = serde_json::to_value(&s).unwrap();
        for key in ["acc", "prec", "rec", "f1"] {
            assert!(json[key]["mean"].is_number() && json[key]["std"].is_number());
        }
        assert!(json["folds"][0]["per_class"].is_array());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.7, 0.1]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}
