//! Confusion-matrix construction and the derived evaluation metrics.
//!
//! Mean-per-class accuracy (the unweighted mean of per-class recalls) is the
//! search objective; overall accuracy and macro one-vs-rest
//! sensitivity/specificity round out the report tables.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("class {class:?} has no samples (empty row); per-class accuracy is undefined")]
    EmptyRow { class: String },
    #[error("specificity undefined for class {class:?}: no samples outside the class")]
    UndefinedSpecificity { class: String },
    #[error("labels out of range: label {label} with {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("prediction/label lengths differ: {predictions} vs {labels}")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("matrix is not square: row {row} has {cols} columns, expected {expected}")]
    NotSquare {
        row: usize,
        cols: usize,
        expected: usize,
    },
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// C×C counts; `counts[t][p]` is the number of samples of true class `t`
/// predicted as class `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Result<Self, MetricsError> {
        if class_names.is_empty() {
            return Err(MetricsError::EmptyMatrix);
        }
        let n = class_names.len();
        Ok(Self {
            counts: vec![vec![0; n]; n],
            class_names,
        })
    }

    pub fn from_counts(counts: Vec<Vec<u64>>, class_names: Vec<String>) -> Result<Self, MetricsError> {
        let n = class_names.len();
        if n == 0 || counts.len() != n {
            return Err(MetricsError::EmptyMatrix);
        }
        for (row, r) in counts.iter().enumerate() {
            if r.len() != n {
                return Err(MetricsError::NotSquare {
                    row,
                    cols: r.len(),
                    expected: n,
                });
            }
        }
        Ok(Self {
            counts,
            class_names,
        })
    }

    pub fn from_predictions(
        true_labels: &[usize],
        predicted: &[usize],
        class_names: Vec<String>,
    ) -> Result<Self, MetricsError> {
        if true_labels.len() != predicted.len() {
            return Err(MetricsError::LengthMismatch {
                predictions: predicted.len(),
                labels: true_labels.len(),
            });
        }
        let mut cm = Self::new(class_names)?;
        for (&t, &p) in true_labels.iter().zip(predicted) {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) -> Result<(), MetricsError> {
        let n = self.num_classes();
        for label in [true_class, predicted] {
            if label >= n {
                return Err(MetricsError::LabelOutOfRange {
                    label,
                    num_classes: n,
                });
            }
        }
        self.counts[true_class][predicted] += 1;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sum(&self, true_class: usize) -> u64 {
        self.counts[true_class].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// CSV with a header row and leading column of class names.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("true\\predicted");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&self.class_names[i]);
            for &c in row {
                out.push(',');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), MetricsError> {
        fs::write(path, self.to_csv_string()).map_err(|source| MetricsError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Diagonal / row sum, per class. Errors on an empty row, naming the class.
pub fn per_class_accuracy(cm: &ConfusionMatrix) -> Result<Vec<f64>, MetricsError> {
    (0..cm.num_classes())
        .map(|i| {
            let row = cm.row_sum(i);
            if row == 0 {
                Err(MetricsError::EmptyRow {
                    class: cm.class_names()[i].clone(),
                })
            } else {
                Ok(cm.count(i, i) as f64 / row as f64)
            }
        })
        .collect()
}

/// Mean-per-class accuracy: the unweighted mean of per-class recalls.
pub fn mpca(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let per_class = per_class_accuracy(cm)?;
    Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
}

/// Trace / total.
pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Macro (unweighted) one-vs-rest sensitivity and specificity.
pub fn sensitivity_specificity(cm: &ConfusionMatrix) -> Result<(f64, f64), MetricsError> {
    let n = cm.num_classes();
    let total = cm.total();
    let mut sens_sum = 0.0;
    let mut spec_sum = 0.0;
    for i in 0..n {
        let tp = cm.count(i, i);
        let row = cm.row_sum(i);
        if row == 0 {
            return Err(MetricsError::EmptyRow {
                class: cm.class_names()[i].clone(),
            });
        }
        sens_sum += tp as f64 / row as f64; // TP / (TP + FN)

        let fp: u64 = (0..n).filter(|&t| t != i).map(|t| cm.count(t, i)).sum();
        let negatives = total - row; // TN + FP
        if negatives == 0 {
            return Err(MetricsError::UndefinedSpecificity {
                class: cm.class_names()[i].clone(),
            });
        }
        let tn = negatives - fp;
        spec_sum += tn as f64 / negatives as f64;
    }
    Ok((sens_sum / n as f64, spec_sum / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn cm(counts: Vec<Vec<u64>>) -> ConfusionMatrix {
        let n = counts.len();
        ConfusionMatrix::from_counts(counts, names(n)).unwrap()
    }

    #[test]
    fn mpca_perfect_classifier() {
        let m = cm(vec![vec![5, 0, 0], vec![0, 3, 0], vec![0, 0, 9]]);
        assert_eq!(mpca(&m).unwrap(), 1.0);
    }

    #[test]
    fn mpca_two_row_example() {
        let m = cm(vec![vec![8, 2], vec![4, 6]]);
        assert_eq!(mpca(&m).unwrap(), 0.7);
    }

    #[test]
    fn mpca_empty_row_names_the_class() {
        let m = cm(vec![vec![8, 2], vec![0, 0]]);
        match mpca(&m).unwrap_err() {
            MetricsError::EmptyRow { class } => assert_eq!(class, "c1"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn overall_accuracy_examples() {
        let m = cm(vec![vec![8, 2], vec![4, 6]]);
        assert_eq!(overall_accuracy(&m).unwrap(), 0.7);
        let d = cm(vec![vec![3, 0], vec![0, 11]]);
        assert_eq!(overall_accuracy(&d).unwrap(), 1.0);
    }

    #[test]
    fn sensitivity_specificity_examples() {
        let perfect = cm(vec![vec![4, 0, 0], vec![0, 4, 0], vec![0, 0, 4]]);
        assert_eq!(sensitivity_specificity(&perfect).unwrap(), (1.0, 1.0));

        // Hand expansion: class 0 TP=8 FN=2 TN=6 FP=4; class 1 TP=6 FN=4 TN=8 FP=2.
        let m = cm(vec![vec![8, 2], vec![4, 6]]);
        let (sens, spec) = sensitivity_specificity(&m).unwrap();
        assert!((sens - 0.7).abs() < 1e-15);
        assert!((spec - 0.7).abs() < 1e-15);
    }

    #[test]
    fn specificity_undefined_for_single_class() {
        let m = ConfusionMatrix::from_counts(vec![vec![5]], names(1)).unwrap();
        assert!(matches!(
            sensitivity_specificity(&m).unwrap_err(),
            MetricsError::UndefinedSpecificity { .. }
        ));
    }

    #[test]
    fn per_class_accuracy_example() {
        let m = cm(vec![vec![8, 2], vec![4, 6]]);
        assert_eq!(per_class_accuracy(&m).unwrap(), vec![0.8, 0.6]);
    }

    #[test]
    fn mpca_is_mean_of_per_class() {
        let m = cm(vec![vec![7, 1, 2], vec![3, 5, 2], vec![1, 1, 8]]);
        let pc = per_class_accuracy(&m).unwrap();
        let mean = pc.iter().sum::<f64>() / pc.len() as f64;
        assert_eq!(mpca(&m).unwrap(), mean);
    }

    #[test]
    fn from_predictions_counts_by_true_then_predicted() {
        let m = ConfusionMatrix::from_predictions(&[0, 0, 1, 1, 1], &[0, 1, 1, 1, 0], names(2))
            .unwrap();
        assert_eq!(m.count(0, 0), 1);
        assert_eq!(m.count(0, 1), 1);
        assert_eq!(m.count(1, 0), 1);
        assert_eq!(m.count(1, 1), 2);
    }

    #[test]
    fn csv_has_named_header_and_rows() {
        let m = cm(vec![vec![8, 2], vec![4, 6]]);
        let text = m.to_csv_string();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "true\\predicted,c0,c1");
        assert_eq!(lines.next().unwrap(), "c0,8,2");
        assert_eq!(lines.next().unwrap(), "c1,4,6");
    }

    // Independent oracle: recompute per-class recall from first principles
    // with integer-indexed loops, then average.
    fn mpca_oracle(counts: &[Vec<u64>]) -> f64 {
        let mut acc = 0.0;
        for (i, row) in counts.iter().enumerate() {
            let mut row_total = 0u64;
            for &v in row {
                row_total += v;
            }
            acc += row[i] as f64 / row_total as f64;
        }
        acc / counts.len() as f64
    }

    proptest! {
        #[test]
        fn mpca_matches_brute_force_oracle(
            counts in proptest::collection::vec(proptest::collection::vec(1u64..200, 5), 5)
        ) {
            let m = cm(counts.clone());
            let got = mpca(&m).unwrap();
            prop_assert!((got - mpca_oracle(&counts)).abs() <= 1e-12);
        }

        #[test]
        fn metrics_lie_in_unit_interval(
            counts in proptest::collection::vec(proptest::collection::vec(0u64..50, 4), 4),
            diag in proptest::collection::vec(1u64..50, 4),
        ) {
            // Force nonzero rows by bumping the diagonal.
            let mut counts = counts;
            for i in 0..4 {
                counts[i][i] += diag[i];
            }
            let m = cm(counts);
            let (sens, spec) = sensitivity_specificity(&m).unwrap();
            for v in [mpca(&m).unwrap(), overall_accuracy(&m).unwrap(), sens, spec] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            for v in per_class_accuracy(&m).unwrap() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn mpca_invariant_under_simultaneous_permutation(
            counts in proptest::collection::vec(proptest::collection::vec(1u64..100, 4), 4),
            swap in (0usize..4, 0usize..4),
        ) {
            let m = cm(counts.clone());
            let (a, b) = swap;
            let mut permuted = counts;
            permuted.swap(a, b);
            for row in &mut permuted {
                row.swap(a, b);
            }
            let pm = cm(permuted);
            prop_assert!((mpca(&m).unwrap() - mpca(&pm).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn metrics_invariant_under_count_scaling(
            counts in proptest::collection::vec(proptest::collection::vec(1u64..60, 3), 3),
            k in 1u64..9,
        ) {
            let m = cm(counts.clone());
            let scaled = cm(counts.iter().map(|r| r.iter().map(|&v| v * k).collect()).collect());
            prop_assert_eq!(mpca(&m).unwrap(), mpca(&scaled).unwrap());
            prop_assert_eq!(overall_accuracy(&m).unwrap(), overall_accuracy(&scaled).unwrap());
            prop_assert_eq!(per_class_accuracy(&m).unwrap(), per_class_accuracy(&scaled).unwrap());
            prop_assert_eq!(
                sensitivity_specificity(&m).unwrap(),
                sensitivity_specificity(&scaled).unwrap()
            );
        }

        #[test]
        fn two_class_macro_sensitivity_equals_specificity(
            counts in proptest::collection::vec(proptest::collection::vec(1u64..100, 2), 2)
        ) {
            let m = cm(counts);
            let (sens, spec) = sensitivity_specificity(&m).unwrap();
            prop_assert!((sens - spec).abs() <= 1e-12);
        }

        #[test]
        fn balanced_rows_make_mpca_equal_overall(
            rows in proptest::collection::vec(proptest::collection::vec(0u64..20, 3), 3)
        ) {
            // Pad the diagonal so every row sums to the same total
            // (entries are < 20 each, so sums stay below the target).
            let target: u64 = 100;
            let mut counts = rows;
            for (i, row) in counts.iter_mut().enumerate() {
                let sum: u64 = row.iter().sum();
                row[i] += target - sum;
            }
            let m = cm(counts);
            prop_assert!((mpca(&m).unwrap() - overall_accuracy(&m).unwrap()).abs() <= 1e-12);
        }
    }
}
