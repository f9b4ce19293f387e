//! Confusion matrices and the binary classification metrics reported per
//! class: precision, recall, F1, overall accuracy and ROC AUC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// The same counts seen from the other class.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

/// A ratio that may have had an empty denominator. Degenerate values are 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl Metric {
    fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Metric {
                value: 0.0,
                degenerate: true,
            }
        } else {
            Metric {
                value: num as f64 / den as f64,
                degenerate: false,
            }
        }
    }
}

pub fn confusion(labels: &[u8], predictions: &[u8], positive: u8) -> Result<ConfusionMatrix> {
    if labels.len() != predictions.len() {
        return Err(Error::Contract(format!(
            "{} labels vs {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Contract("confusion matrix over zero samples".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&y, &p) in labels.iter().zip(predictions) {
        match (y == positive, p == positive) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::UndefinedMetric("accuracy over zero samples".into()));
    }
    Ok((cm.tp + cm.tn) as f64 / cm.total() as f64)
}

pub fn recall(cm: &ConfusionMatrix) -> Metric {
    Metric::ratio(cm.tp, cm.tp + cm.fn_)
}

pub fn precision(cm: &ConfusionMatrix) -> Metric {
    Metric::ratio(cm.tp, cm.tp + cm.fp)
}

/// Harmonic mean of the precision and recall of the same positive class.
pub fn f1(cm: &ConfusionMatrix) -> Metric {
    let p = precision(cm);
    let r = recall(cm);
    if p.value + r.value == 0.0 {
        return Metric {
            value: 0.0,
            degenerate: true,
        };
    }
    // 2pr/(p+r) in count form, exact in one division
    Metric {
        value: (2 * cm.tp) as f64 / (2 * cm.tp + cm.fp + cm.fn_) as f64,
        degenerate: p.degenerate || r.degenerate,
    }
}

/// How equal negative/positive scores count toward AUC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Ties earn half a pair (Mann–Whitney).
    #[default]
    Half,
    /// Only strictly ordered pairs count.
    Strict,
}

fn class_sizes(labels: &[u8]) -> Result<(u64, u64)> {
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one positive and one negative label".into(),
        ));
    }
    Ok((pos, neg))
}

/// Fraction of (negative, positive) pairs ranked correctly; ties count half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    auc_with(scores, labels, TieRule::Half)
}

pub fn auc_with(scores: &[f64], labels: &[u8], ties: TieRule) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (pos, neg) = class_sizes(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Walk tied groups in ascending score order; twice the winning-pair count
    // stays an integer so the result is exact.
    let mut doubled: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        doubled += 2 * gp * neg_below;
        if ties == TieRule::Half {
            doubled += gp * gn;
        }
        neg_below += gn;
        i = j;
    }
    Ok((doubled as f64 / 2.0) / (pos * neg) as f64)
}

/// ROC staircase over every distinct score threshold, from (0,0) to (1,1).
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (pos, neg) = class_sizes(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Trapezoidal area under a sequence of (fpr, tpr) points.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
}

impl ClassMetrics {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Self {
        ClassMetrics {
            precision: precision(cm),
            recall: recall(cm),
            f1: f1(cm),
        }
    }
}

/// One row of a model comparison: per-class precision/recall/F1, accuracy,
/// AUC, and the confusion counts with class 1 as the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub no: ClassMetrics,
    pub yes: ClassMetrics,
    pub accuracy: f64,
    /// `None` when the evaluated labels hold a single class.
    pub auc: Option<f64>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn evaluate(labels: &[u8], predictions: &[u8], scores: &[f64]) -> Result<Self> {
        let cm = confusion(labels, predictions, 1)?;
        let auc = match auc(scores, labels) {
            Ok(a) => Some(a),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(EvalReport {
            no: ClassMetrics::from_confusion(&cm.swapped()),
            yes: ClassMetrics::from_confusion(&cm),
            accuracy: accuracy(&cm)?,
            auc,
            confusion: cm,
        })
    }

    /// Misclassifications involving the positive class (FN + FP).
    pub fn class1_errors(&self) -> u64 {
        self.confusion.fn_ + self.confusion.fp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_hand_count() {
        let cm = confusion(&[1, 1, 0, 0], &[1, 0, 0, 1], 1).unwrap();
        assert_eq!((cm.tp, cm.fn_, cm.tn, cm.fp), (1, 1, 1, 1));
        let cm0 = confusion(&[1, 1, 0, 0], &[1, 0, 0, 1], 0).unwrap();
        assert_eq!((cm0.tp, cm0.fn_, cm0.tn, cm0.fp), (1, 1, 1, 1));
        let perfect = confusion(&[1, 0, 1], &[1, 0, 1], 1).unwrap();
        assert_eq!((perfect.fp, perfect.fn_), (0, 0));
        assert!(confusion(&[1], &[1, 0], 1).is_err());
    }

    #[test]
    fn accuracy_values() {
        let cm = ConfusionMatrix {
            tp: 2,
            tn: 3,
            fp: 1,
            fn_: 4,
        };
        assert_eq!(accuracy(&cm).unwrap(), 0.5);
        assert_eq!(accuracy(&cm.swapped()).unwrap(), 0.5);
        let perfect = ConfusionMatrix { tp: 3, tn: 2, ..Default::default() };
        assert_eq!(accuracy(&perfect).unwrap(), 1.0);
        let wrong = ConfusionMatrix { fp: 3, fn_: 2, ..Default::default() };
        assert_eq!(accuracy(&wrong).unwrap(), 0.0);
        assert!(accuracy(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn recall_precision_f1() {
        let cm = ConfusionMatrix { tp: 3, fn_: 1, fp: 3, tn: 0 };
        assert_eq!(recall(&cm).value, 0.75);
        assert_eq!(precision(&cm).value, 0.5);
        let eq = ConfusionMatrix { tp: 2, fn_: 2, fp: 2, tn: 1 };
        assert!((f1(&eq).value - 0.5).abs() < 1e-15);
        let empty = ConfusionMatrix { tp: 0, fp: 0, fn_: 2, tn: 3 };
        let p = precision(&empty);
        assert_eq!(p.value, 0.0);
        assert!(p.degenerate);
        assert!(f1(&empty).degenerate);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[1, 1, 0, 0]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5, 0.5], &[0, 1]).unwrap(), 0.5);
        assert_eq!(auc_with(&[0.5, 0.5], &[0, 1], TieRule::Strict).unwrap(), 0.0);
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn roc_endpoints_and_area() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.4];
        let labels = [0, 0, 1, 1, 1];
        let pts = roc_points(&scores, &labels).unwrap();
        assert_eq!(pts[0], (0.0, 0.0));
        assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
        let a = auc(&scores, &labels).unwrap();
        assert!((trapezoid_area(&pts) - a).abs() < 1e-12);
    }

    #[test]
    fn report_shape() {
        let r = EvalReport::evaluate(&[1, 1, 0, 0], &[1, 0, 0, 1], &[0.9, 0.3, 0.2, 0.7]).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.auc, Some(0.75));
        assert_eq!(r.class1_errors(), 2);
        assert_eq!(r.yes.recall.value, 0.5);
        assert_eq!(r.no.recall.value, 0.5);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["confusion"]["fn"], 1);
    }
}
