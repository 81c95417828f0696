//! Independent oracles for the ROC/AUC implementation.
//!
//! The pair-counting oracle computes AUC as the Mann-Whitney statistic
//! (fraction of stable/unstable pairs ranked correctly, ties worth 1/2); the
//! naive ROC oracle rebuilds a confusion matrix from scratch at every distinct
//! threshold. Both are written directly from the definitions so they share no
//! code with the sweep implementation they check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stvs_core::data::StabilityClass;
use stvs_core::metrics::{auc, confusion, roc_curve, RocPoint};

fn pair_counting_auc(scores: &[f64], labels: &[StabilityClass]) -> f64 {
    let mut correct = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != StabilityClass::Stable {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != StabilityClass::Unstable {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                correct += 1.0;
            } else if si == sj {
                correct += 0.5;
            }
        }
    }
    correct / pairs
}

fn naive_roc_points(scores: &[f64], labels: &[StabilityClass]) -> Vec<RocPoint> {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();

    let mut points = vec![RocPoint {
        threshold: None,
        false_positive_rate: 0.0,
        true_positive_rate: 0.0,
    }];
    for &theta in &thresholds {
        let preds: Vec<StabilityClass> = scores
            .iter()
            .map(|&s| {
                if s >= theta {
                    StabilityClass::Stable
                } else {
                    StabilityClass::Unstable
                }
            })
            .collect();
        let cm = confusion(&preds, labels).unwrap();
        points.push(RocPoint {
            threshold: Some(theta),
            false_positive_rate: cm.false_positive as f64 / cm.actual_negative() as f64,
            true_positive_rate: cm.true_positive as f64 / cm.actual_positive() as f64,
        });
    }
    points
}

fn random_scored_labels(
    rng: &mut ChaCha8Rng,
    n: usize,
    quantize: bool,
) -> (Vec<f64>, Vec<StabilityClass>) {
    loop {
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = rng.gen();
                if quantize {
                    (s * 20.0).round() / 20.0
                } else {
                    s
                }
            })
            .collect();
        let labels: Vec<StabilityClass> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    StabilityClass::Stable
                } else {
                    StabilityClass::Unstable
                }
            })
            .collect();
        let stable = labels
            .iter()
            .filter(|&&l| l == StabilityClass::Stable)
            .count();
        if stable > 0 && stable < n {
            return (scores, labels);
        }
    }
}

#[test]
fn trapezoidal_auc_matches_pair_counting_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..20 {
        // Quantized scores force heavy ties in half the trials.
        let (scores, labels) = random_scored_labels(&mut rng, 1000, trial % 2 == 0);
        let curve = roc_curve(&scores, &labels).unwrap();
        let swept = auc(&curve);
        let counted = pair_counting_auc(&scores, &labels);
        assert!(
            (swept - counted).abs() < 1e-12,
            "trial {trial}: trapezoid {swept} vs pair count {counted}"
        );
    }
}

#[test]
fn roc_points_match_naive_threshold_recomputation_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..20 {
        let (scores, labels) = random_scored_labels(&mut rng, 200, trial % 2 == 0);
        let curve = roc_curve(&scores, &labels).unwrap();
        let naive = naive_roc_points(&scores, &labels);
        assert_eq!(curve.points.len(), naive.len(), "trial {trial}");
        for (got, want) in curve.points.iter().zip(&naive) {
            assert_eq!(got.threshold, want.threshold);
            // Both paths divide integer counts by the same totals, so the
            // floats must agree bit for bit.
            assert_eq!(got.false_positive_rate, want.false_positive_rate);
            assert_eq!(got.true_positive_rate, want.true_positive_rate);
        }
    }
}

#[test]
fn roc_rates_are_non_decreasing_and_anchored() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let n = rng.gen_range(2..300);
        let quantize = rng.gen_bool(0.5);
        let (scores, labels) = random_scored_labels(&mut rng, n, quantize);
        let curve = roc_curve(&scores, &labels).unwrap();
        let first = curve.points.first().unwrap();
        let last = curve.points.last().unwrap();
        assert_eq!(
            (first.false_positive_rate, first.true_positive_rate),
            (0.0, 0.0)
        );
        assert_eq!(
            (last.false_positive_rate, last.true_positive_rate),
            (1.0, 1.0)
        );
        for pair in curve.points.windows(2) {
            assert!(pair[1].false_positive_rate >= pair[0].false_positive_rate);
            assert!(pair[1].true_positive_rate >= pair[0].true_positive_rate);
        }
    }
}

#[test]
fn swapping_labels_and_negating_scores_preserves_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..25 {
        let quantize = rng.gen_bool(0.5);
        let (scores, labels) = random_scored_labels(&mut rng, 150, quantize);
        let flipped_scores: Vec<f64> = scores.iter().map(|s| -s).collect();
        let flipped_labels: Vec<StabilityClass> = labels
            .iter()
            .map(|&l| match l {
                StabilityClass::Stable => StabilityClass::Unstable,
                StabilityClass::Unstable => StabilityClass::Stable,
            })
            .collect();
        let a = auc(&roc_curve(&scores, &labels).unwrap());
        let b = auc(&roc_curve(&flipped_scores, &flipped_labels).unwrap());
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}
