//! Classification metrics with Stable as the positive class.
//!
//! Scores are interpreted as P(Stable); higher means more confidently stable.

use serde::{Deserialize, Serialize};

use crate::data::StabilityClass;
use crate::error::{Error, Result};

/// Counts with Stable as the positive class: `true_positive` counts instances
/// predicted Stable that are Stable, `false_positive` counts predicted Stable
/// that are Unstable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }

    pub fn actual_positive(&self) -> usize {
        self.true_positive + self.false_negative
    }

    pub fn actual_negative(&self) -> usize {
        self.false_positive + self.true_negative
    }
}

/// Tallies predictions against labels.
pub fn confusion(
    predictions: &[StabilityClass],
    labels: &[StabilityClass],
) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::MetricLengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyMetricInput);
    }
    let mut cm = ConfusionMatrix {
        true_positive: 0,
        false_positive: 0,
        false_negative: 0,
        true_negative: 0,
    };
    for (&pred, &label) in predictions.iter().zip(labels) {
        match (pred, label) {
            (StabilityClass::Stable, StabilityClass::Stable) => cm.true_positive += 1,
            (StabilityClass::Stable, StabilityClass::Unstable) => cm.false_positive += 1,
            (StabilityClass::Unstable, StabilityClass::Stable) => cm.false_negative += 1,
            (StabilityClass::Unstable, StabilityClass::Unstable) => cm.true_negative += 1,
        }
    }
    Ok(cm)
}

/// Fraction of correct predictions.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMetricInput);
    }
    Ok((cm.true_positive + cm.true_negative) as f64 / total as f64)
}

/// How the F1 statistic is assembled from the confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum F1Mode {
    /// Harmonic mean of precision and recall.
    Standard,
    /// Harmonic mean of the true-positive and false-positive rates, kept for
    /// comparability with reports that assemble the statistic from rates.
    TprFpr,
}

/// F1 score of the Stable class.
///
/// Returns 0.0 when both ingredients vanish; errors when a rate is undefined
/// because its denominator is zero.
pub fn f1(cm: &ConfusionMatrix, mode: F1Mode) -> Result<f64> {
    match mode {
        F1Mode::Standard => {
            if cm.true_positive + cm.false_positive == 0 {
                return Err(Error::UndefinedMetric {
                    denominator: "tp + fp (precision)",
                });
            }
            if cm.actual_positive() == 0 {
                return Err(Error::UndefinedMetric {
                    denominator: "tp + fn (recall)",
                });
            }
            let precision =
                cm.true_positive as f64 / (cm.true_positive + cm.false_positive) as f64;
            let recall = cm.true_positive as f64 / cm.actual_positive() as f64;
            if precision + recall == 0.0 {
                return Ok(0.0);
            }
            Ok(2.0 * precision * recall / (precision + recall))
        }
        F1Mode::TprFpr => {
            if cm.actual_positive() == 0 {
                return Err(Error::UndefinedMetric {
                    denominator: "tp + fn (true-positive rate)",
                });
            }
            if cm.actual_negative() == 0 {
                return Err(Error::UndefinedMetric {
                    denominator: "fp + tn (false-positive rate)",
                });
            }
            let tpr = cm.true_positive as f64 / cm.actual_positive() as f64;
            let fpr = cm.false_positive as f64 / cm.actual_negative() as f64;
            if tpr + fpr == 0.0 {
                return Ok(0.0);
            }
            Ok(2.0 * tpr * fpr / (tpr + fpr))
        }
    }
}

/// One operating point of the ROC curve.
///
/// `threshold` is the score cutoff realizing the point (predict Stable when
/// score >= threshold); the leading (0, 0) point has no finite cutoff and
/// carries `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: Option<f64>,
    pub false_positive_rate: f64,
    pub true_positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// Sweeps thresholds over the distinct scores in descending order, grouping
/// ties so each distinct score contributes exactly one point.
///
/// The curve always starts at (0, 0) and ends at (1, 1), and both rates are
/// non-decreasing along it.
pub fn roc_curve(scores: &[f64], labels: &[StabilityClass]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::MetricLengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyMetricInput);
    }
    for (index, &value) in scores.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFiniteScore { index, value });
        }
    }
    let n_pos = labels
        .iter()
        .filter(|&&l| l == StabilityClass::Stable)
        .count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassLabels);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));

    let mut points = vec![RocPoint {
        threshold: None,
        false_positive_rate: 0.0,
        true_positive_rate: 0.0,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        while i < order.len() && scores[order[i]] == score {
            match labels[order[i]] {
                StabilityClass::Stable => tp += 1,
                StabilityClass::Unstable => fp += 1,
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: Some(score),
            false_positive_rate: fp as f64 / n_neg as f64,
            true_positive_rate: tp as f64 / n_pos as f64,
        });
    }
    Ok(RocCurve { points })
}

/// Area under the ROC curve by the trapezoidal rule.
pub fn auc(curve: &RocCurve) -> f64 {
    let mut area = 0.0;
    for pair in curve.points.windows(2) {
        let dx = pair[1].false_positive_rate - pair[0].false_positive_rate;
        area += dx * (pair[0].true_positive_rate + pair[1].true_positive_rate) / 2.0;
    }
    area
}

#[cfg(test)]
mod tests {
    use super::*;
    use StabilityClass::{Stable, Unstable};

    #[test]
    fn confusion_counts_each_quadrant() {
        let preds = [Stable, Stable, Unstable, Unstable, Stable];
        let labels = [Stable, Unstable, Stable, Unstable, Stable];
        let cm = confusion(&preds, &labels).unwrap();
        assert_eq!(cm.true_positive, 2);
        assert_eq!(cm.false_positive, 1);
        assert_eq!(cm.false_negative, 1);
        assert_eq!(cm.true_negative, 1);
        assert!((accuracy(&cm).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn confusion_rejects_mismatched_or_empty_input() {
        assert!(matches!(
            confusion(&[Stable], &[]),
            Err(Error::MetricLengthMismatch { .. })
        ));
        assert!(matches!(confusion(&[], &[]), Err(Error::EmptyMetricInput)));
    }

    #[test]
    fn f1_hand_computed_fixture() {
        // tp=8, fp=2, fn=1, tn=9: precision 0.8, recall 8/9.
        let cm = ConfusionMatrix {
            true_positive: 8,
            false_positive: 2,
            false_negative: 1,
            true_negative: 9,
        };
        let expected = 2.0 * 0.8 * (8.0 / 9.0) / (0.8 + 8.0 / 9.0);
        assert!((f1(&cm, F1Mode::Standard).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn rate_based_f1_differs_from_standard() {
        // tpr = 8/9, fpr = 2/11.
        let cm = ConfusionMatrix {
            true_positive: 8,
            false_positive: 2,
            false_negative: 1,
            true_negative: 9,
        };
        let tpr = 8.0 / 9.0;
        let fpr = 2.0 / 11.0;
        let expected = 2.0 * tpr * fpr / (tpr + fpr);
        let got = f1(&cm, F1Mode::TprFpr).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - f1(&cm, F1Mode::Standard).unwrap()).abs() > 0.1);
    }

    #[test]
    fn f1_reports_which_denominator_vanished() {
        let no_predicted_positive = ConfusionMatrix {
            true_positive: 0,
            false_positive: 0,
            false_negative: 3,
            true_negative: 5,
        };
        match f1(&no_predicted_positive, F1Mode::Standard) {
            Err(Error::UndefinedMetric { denominator }) => {
                assert!(denominator.contains("precision"))
            }
            other => panic!("expected undefined-metric error, got {other:?}"),
        }
        let no_actual_positive = ConfusionMatrix {
            true_positive: 0,
            false_positive: 2,
            false_negative: 0,
            true_negative: 5,
        };
        match f1(&no_actual_positive, F1Mode::Standard) {
            Err(Error::UndefinedMetric { denominator }) => assert!(denominator.contains("recall")),
            other => panic!("expected undefined-metric error, got {other:?}"),
        }
    }

    #[test]
    fn perfect_separation_gives_unit_auc() {
        let scores = [0.9, 0.8, 0.3, 0.2];
        let labels = [Stable, Stable, Unstable, Unstable];
        let curve = roc_curve(&scores, &labels).unwrap();
        assert_eq!(curve.points.first().unwrap().false_positive_rate, 0.0);
        assert_eq!(curve.points.first().unwrap().true_positive_rate, 0.0);
        assert_eq!(curve.points.last().unwrap().false_positive_rate, 1.0);
        assert_eq!(curve.points.last().unwrap().true_positive_rate, 1.0);
        assert!((auc(&curve) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_equal_scores_collapse_to_chance() {
        let scores = [0.5, 0.5, 0.5, 0.5];
        let labels = [Stable, Unstable, Stable, Unstable];
        let curve = roc_curve(&scores, &labels).unwrap();
        assert_eq!(curve.points.len(), 2);
        assert_eq!(curve.points[1].threshold, Some(0.5));
        assert_eq!(curve.points[1].false_positive_rate, 1.0);
        assert_eq!(curve.points[1].true_positive_rate, 1.0);
        assert!((auc(&curve) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn curve_rejects_degenerate_inputs() {
        assert!(matches!(
            roc_curve(&[0.1, 0.2], &[Stable, Stable]),
            Err(Error::SingleClassLabels)
        ));
        assert!(matches!(
            roc_curve(&[f64::NAN, 0.2], &[Stable, Unstable]),
            Err(Error::NonFiniteScore { index: 0, .. })
        ));
    }

    #[test]
    fn tied_scores_form_one_point() {
        let scores = [0.7, 0.7, 0.7, 0.2];
        let labels = [Stable, Unstable, Stable, Unstable];
        let curve = roc_curve(&scores, &labels).unwrap();
        // (0,0), the 0.7 group, the 0.2 group.
        assert_eq!(curve.points.len(), 3);
        assert_eq!(curve.points[1].true_positive_rate, 1.0);
        assert_eq!(curve.points[1].false_positive_rate, 0.5);
    }
}
