use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Labels;
use crate::matrix::Matrix;

/// Classification metrics over one split.
///
/// For single-label data micro-F1 coincides with accuracy. For multi-label
/// data a class is predicted when its probability exceeds 0.5, accuracy is
/// the fraction of correct (node, class) decisions and balanced accuracy is
/// the mean positive recall over classes with at least one positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub micro_f1: f64,
    pub balanced_accuracy: f64,
}

impl Metrics {
    /// The headline number: accuracy for single-label, micro-F1 for
    /// multi-label tasks.
    pub fn primary(&self, multi_label: bool) -> f64 {
        if multi_label {
            self.micro_f1
        } else {
            self.accuracy
        }
    }
}

/// Pools prediction counts across graphs before computing [`Metrics`].
#[derive(Clone, Debug, Default)]
pub struct MetricAccumulator {
    correct: usize,
    total: usize,
    class_hits: Vec<usize>,
    class_count: Vec<usize>,
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    fn grow(&mut self, k: usize) {
        if self.class_count.len() < k {
            self.class_count.resize(k, 0);
            self.class_hits.resize(k, 0);
        }
    }

    /// Adds the rows of `probs` selected by `mask`.
    pub fn add(&mut self, probs: &Matrix, labels: &Labels, mask: &[bool]) -> Result<()> {
        if mask.len() != probs.rows() || labels.len() != probs.rows() {
            return Err(Error::shape(
                "MetricAccumulator::add",
                probs.rows(),
                format!("{} mask, {} labels", mask.len(), labels.len()),
            ));
        }
        let k = probs.cols();
        self.grow(k);
        for i in (0..probs.rows()).filter(|&i| mask[i]) {
            match labels {
                Labels::Single(y) => {
                    let y = y[i];
                    if y >= k {
                        return Err(Error::InvalidArgument(format!("label {y} outside [0, {k})")));
                    }
                    let hit = probs.argmax_row(i) == y;
                    self.total += 1;
                    self.class_count[y] += 1;
                    if hit {
                        self.correct += 1;
                        self.class_hits[y] += 1;
                        self.tp += 1;
                    } else {
                        self.fp += 1;
                        self.fn_ += 1;
                    }
                }
                Labels::Multi(y) => {
                    for c in 0..k {
                        let pred = probs.get(i, c) > 0.5;
                        let truth = y.get(i, c) == 1.0;
                        self.total += 1;
                        if pred == truth {
                            self.correct += 1;
                        }
                        match (pred, truth) {
                            (true, true) => self.tp += 1,
                            (true, false) => self.fp += 1,
                            (false, true) => self.fn_ += 1,
                            (false, false) => {}
                        }
                        if truth {
                            self.class_count[c] += 1;
                            if pred {
                                self.class_hits[c] += 1;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<Metrics> {
        if self.total == 0 {
            return Err(Error::InvalidArgument("metrics over an empty split".into()));
        }
        Ok(Metrics {
            accuracy: self.correct as f64 / self.total as f64,
            micro_f1: micro_f1_from_counts(self.tp, self.fp, self.fn_),
            balanced_accuracy: balanced(&self.class_hits, &self.class_count),
        })
    }
}

/// `2TP / (2TP + FP + FN)`; 1.0 when there is nothing to predict and
/// nothing was predicted.
pub fn micro_f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

fn balanced(hits: &[usize], count: &[usize]) -> f64 {
    let recalls: Vec<f64> = hits
        .iter()
        .zip(count)
        .filter(|(_, &c)| c > 0)
        .map(|(&h, &c)| h as f64 / c as f64)
        .collect();
    if recalls.is_empty() {
        1.0
    } else {
        recalls.iter().sum::<f64>() / recalls.len() as f64
    }
}

pub fn evaluate_probs(probs: &Matrix, labels: &Labels, mask: &[bool]) -> Result<Metrics> {
    let mut acc = MetricAccumulator::new();
    acc.add(probs, labels, mask)?;
    acc.finish()
}

/// Softmax of logits row by row, or the elementwise sigmoid for
/// multi-label outputs.
pub fn probabilities(logits: &Matrix, multi_label: bool) -> Matrix {
    crate::distill::softened_probs_value(logits, 1.0, multi_label).expect("unit temperature is valid")
}

/// Index of the largest metric; the lowest index wins ties.
pub fn select_best(metrics: &[f64]) -> usize {
    let mut best = 0;
    for (i, &m) in metrics.iter().enumerate() {
        if m > metrics[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor() {
        let p = Matrix::from_rows(&[[0.9, 0.1], [0.2, 0.8]]).unwrap();
        let m = evaluate_probs(&p, &Labels::Single(vec![0, 1]), &[true, true]).unwrap();
        assert_eq!((m.accuracy, m.micro_f1, m.balanced_accuracy), (1.0, 1.0, 1.0));
        let y = Labels::Multi(Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap());
        let m = evaluate_probs(&p, &y, &[true, true]).unwrap();
        assert_eq!((m.accuracy, m.micro_f1, m.balanced_accuracy), (1.0, 1.0, 1.0));
    }

    #[test]
    fn constant_predictor_balanced_accuracy() {
        let k = 4;
        let p = Matrix::from_fn(8, k, |_, j| if j == 2 { 0.7 } else { 0.1 });
        let y: Vec<usize> = (0..8).map(|i| i % k).collect();
        let m = evaluate_probs(&p, &Labels::Single(y), &[true; 8]).unwrap();
        assert_eq!(m.balanced_accuracy, 1.0 / k as f64);
    }

    #[test]
    fn micro_f1_hand_case() {
        assert!((micro_f1_from_counts(2, 1, 1) - 2.0 / 3.0).abs() < 1e-12);
        // TP=2, FP=1, FN=1 laid out as a multi-label prediction
        let p = Matrix::from_rows(&[[0.9, 0.9], [0.9, 0.1]]).unwrap();
        let y = Labels::Multi(Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap());
        let m = evaluate_probs(&p, &y, &[true, true]).unwrap();
        assert!((m.micro_f1 - 0.6667).abs() < 1e-4);
        assert_eq!(micro_f1_from_counts(0, 0, 0), 1.0);
    }

    #[test]
    fn empty_split_is_an_error() {
        let p = Matrix::zeros(2, 2);
        assert!(evaluate_probs(&p, &Labels::Single(vec![0, 1]), &[false, false]).is_err());
    }

    #[test]
    fn best_selection() {
        assert_eq!(select_best(&[0.1, 0.2, 0.3, 0.4]), 3);
        assert_eq!(select_best(&[0.5; 4]), 0);
        assert_eq!(select_best(&[0.2, 0.7, 0.7, 0.1]), 1);
    }
}
