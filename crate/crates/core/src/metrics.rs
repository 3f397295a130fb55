//! Binary-classification evaluation: confusion-matrix metrics and ROC-AUC.
//!
//! ROC-AUC is computed from the Mann–Whitney rank statistic with average
//! ranks for ties, which is exact under ties (unlike trapezoidal curve
//! integration). Precision, recall, and F1 return 0 when their denominator
//! is 0; with heavily imbalanced data an all-negative prediction is a real
//! case, not an error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("single class: both positive and negative labels are required")]
    SingleClass,
}

/// Counts of a binary confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / total as f64
    }

    pub fn precision(&self) -> f64 {
        ratio_or_zero(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio_or_zero(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio_or_zero(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Count the confusion matrix of `y_pred` against `y_true` (labels in {0,1},
/// anything nonzero counts as positive).
pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut m = ConfusionMatrix {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t != 0, p != 0) {
            (true, true) => m.tp += 1,
            (false, true) => m.fp += 1,
            (false, false) => m.tn += 1,
            (true, false) => m.fn_ += 1,
        }
    }
    Ok(m)
}

/// ROC-AUC via the Mann–Whitney rank statistic.
///
/// `(sum of positive ranks - n_pos*(n_pos+1)/2) / (n_pos * n_neg)` with
/// tied scores receiving the average rank of their group. Scores must be
/// finite; NaN would be ordered by `total_cmp` and silently skew the result.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<f64, MetricsError> {
    if y_true.len() != scores.len() {
        return Err(MetricsError::LengthMismatch {
            left: y_true.len(),
            right: scores.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n_pos = y_true.iter().filter(|&&t| t != 0).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j share the average rank of the tied group.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if y_true[idx] != 0 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }

    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Linear-interpolation quantile on a sorted sample (the common "R-7"
/// rule): position h = q·(n−1), interpolating between the two neighbours.
/// Panics on an empty slice or q outside [0,1]; callers guard emptiness.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    assert!((0.0..=1.0).contains(&q), "quantile level outside [0,1]");
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// One evaluated model, in the shape emitted by reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: Option<f64>,
    pub confusion: ConfusionMatrix,
}

impl ModelMetrics {
    pub fn from_predictions(
        model: &str,
        y_true: &[u8],
        y_pred: &[u8],
        scores: Option<&[f64]>,
    ) -> Result<Self, MetricsError> {
        let cm = confusion(y_true, y_pred)?;
        let roc = match scores {
            Some(s) => Some(roc_auc(y_true, s)?),
            None => None,
        };
        Ok(ModelMetrics {
            model: model.to_string(),
            accuracy: cm.accuracy(),
            precision: cm.precision(),
            recall: cm.recall(),
            f1: cm.f1(),
            roc_auc: roc,
            confusion: cm,
        })
    }

    /// Header of the tabular export.
    pub const CSV_HEADER: &'static str = "Model,Accuracy,F1 Score,ROC-AUC";

    /// One CSV row matching [`Self::CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        let auc = self
            .roc_auc
            .map_or_else(|| "".to_string(), |a| format!("{a:.6}"));
        format!(
            "{},{:.6},{:.6},{}",
            self.model, self.accuracy, self.f1, auc
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// O(n^2) pairwise AUC: ties count one half.
    fn auc_pairwise(y: &[u8], s: &[f64]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] != 0 && y[j] == 0 {
                    pairs += 1.0;
                    if s[i] > s[j] {
                        wins += 1.0;
                    } else if s[i] == s[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let y = [1u8, 0, 1, 0, 1];
        let m = confusion(&y, &y).unwrap();
        assert_eq!(m.accuracy(), 1.0);
        assert_eq!(m.precision(), 1.0);
        assert_eq!(m.recall(), 1.0);
        assert_eq!(m.f1(), 1.0);
    }

    #[test]
    fn all_negative_prediction_uses_zero_convention() {
        let y_true = [1u8, 1, 0, 0];
        let y_pred = [0u8, 0, 0, 0];
        let m = confusion(&y_true, &y_pred).unwrap();
        assert_eq!(m.recall(), 0.0);
        assert_eq!(m.precision(), 0.0);
        assert_eq!(m.f1(), 0.0);
        assert_eq!(m.accuracy(), 0.5);
    }

    #[test]
    fn hand_computed_counts() {
        // tp=8, fp=2, fn=4, tn=86: precision 0.8, recall 2/3, F1 ~ 0.7273.
        let mut y_true = Vec::new();
        let mut y_pred = Vec::new();
        for _ in 0..8 {
            y_true.push(1);
            y_pred.push(1);
        }
        for _ in 0..2 {
            y_true.push(0);
            y_pred.push(1);
        }
        for _ in 0..4 {
            y_true.push(1);
            y_pred.push(0);
        }
        for _ in 0..86 {
            y_true.push(0);
            y_pred.push(0);
        }
        let m = confusion(&y_true, &y_pred).unwrap();
        assert_eq!(
            m,
            ConfusionMatrix {
                tp: 8,
                fp: 2,
                tn: 86,
                fn_: 4
            }
        );
        assert!((m.precision() - 0.8).abs() < 1e-12);
        assert!((m.recall() - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.f1() - 0.727_272_727_272_727_3).abs() < 1e-12);
        assert_eq!(m.accuracy(), 94.0 / 100.0);
    }

    #[test]
    fn length_mismatch_and_empty_are_rejected() {
        assert_eq!(
            confusion(&[1], &[1, 0]),
            Err(MetricsError::LengthMismatch { left: 1, right: 2 })
        );
        assert_eq!(confusion(&[], &[]), Err(MetricsError::EmptyInput));
        assert_eq!(roc_auc(&[], &[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn auc_perfect_separation_is_one() {
        let y = [0u8, 0, 0, 1, 1];
        let s = [0.1, 0.2, 0.3, 0.8, 0.9];
        assert_eq!(roc_auc(&y, &s).unwrap(), 1.0);
    }

    #[test]
    fn auc_all_ties_is_half() {
        let y = [0u8, 1, 0, 1, 1];
        let s = [0.5; 5];
        assert!((roc_auc(&y, &s).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn auc_single_class_is_error() {
        assert_eq!(
            roc_auc(&[1u8, 1], &[0.1, 0.2]),
            Err(MetricsError::SingleClass)
        );
    }

    #[test]
    fn auc_matches_pairwise_oracle_with_ties() {
        let mut rng = crate::seeds::rng(11, "metrics-oracle");
        use rand::Rng;
        for _ in 0..20 {
            let n = rng.random_range(5..200);
            let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
            if y.iter().all(|&v| v == 0) || y.iter().all(|&v| v == 1) {
                continue;
            }
            // Quantized scores force many ties.
            let s: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(0..8) as f64) / 7.0)
                .collect();
            let fast = roc_auc(&y, &s).unwrap();
            let slow = auc_pairwise(&y, &s);
            assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
        }
    }

    #[test]
    fn quantile_interpolates_between_neighbours() {
        let xs: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        assert!((quantile_sorted(&xs, 0.95) - 95.05).abs() < 1e-12);
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 100.0);
        assert_eq!(quantile_sorted(&[7.0], 0.5), 7.0);
        // Median agreement on even counts.
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    }

    #[test]
    fn csv_row_matches_header_order() {
        let m = ModelMetrics {
            model: "Gradient Boosting".into(),
            accuracy: 0.91,
            precision: 0.7,
            recall: 0.69,
            f1: 0.693,
            roc_auc: Some(0.894),
            confusion: ConfusionMatrix {
                tp: 1,
                fp: 1,
                tn: 1,
                fn_: 1,
            },
        };
        assert_eq!(
            m.csv_row(),
            "Gradient Boosting,0.910000,0.693000,0.894000"
        );
    }

    proptest! {
        #[test]
        fn auc_score_negation_is_complement(
            labels in proptest::collection::vec(0u8..2, 4..60),
            raw in proptest::collection::vec(-100.0f64..100.0, 60),
        ) {
            let n = labels.len();
            let scores = &raw[..n];
            prop_assume!(labels.iter().any(|&v| v == 0) && labels.iter().any(|&v| v == 1));
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let a = roc_auc(&labels, scores).unwrap();
            let b = roc_auc(&labels, &neg).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-9);
        }

        #[test]
        fn auc_invariant_under_increasing_transform(
            labels in proptest::collection::vec(0u8..2, 4..60),
            raw in proptest::collection::vec(-10.0f64..10.0, 60),
        ) {
            let n = labels.len();
            let scores = &raw[..n];
            prop_assume!(labels.iter().any(|&v| v == 0) && labels.iter().any(|&v| v == 1));
            let transformed: Vec<f64> = scores.iter().map(|s| (0.3 * s).exp() + 2.0).collect();
            let a = roc_auc(&labels, scores).unwrap();
            let b = roc_auc(&labels, &transformed).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn accuracy_is_exact_count_ratio(
            pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..100),
        ) {
            let y_true: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let y_pred: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            let m = confusion(&y_true, &y_pred).unwrap();
            let agree = y_true.iter().zip(&y_pred).filter(|(a, b)| a == b).count();
            prop_assert_eq!(m.accuracy(), agree as f64 / pairs.len() as f64);
            prop_assert_eq!(m.total(), pairs.len());
        }
    }
}
