use serde::{Deserialize, Serialize};

use crate::diff::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// `matrix[actual][predicted]` counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub matrix: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_predictions(actual: &[usize], predicted: &[usize], num_classes: usize) -> Self {
        let mut matrix = vec![vec![0; num_classes]; num_classes];
        for (&a, &p) in actual.iter().zip(predicted) {
            matrix[a][p] += 1;
        }
        ConfusionMatrix { matrix }
    }

    pub fn total(&self) -> usize {
        self.matrix.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: usize = (0..self.matrix.len()).map(|c| self.matrix[c][c]).sum();
        correct as f64 / self.total() as f64
    }

    /// `2TP / (2TP + FP + FN)`, with 0 for a class never predicted nor present.
    pub fn f1(&self, class: usize) -> f64 {
        let tp = self.matrix[class][class];
        let fn_: usize = self.matrix[class].iter().sum::<usize>() - tp;
        let fp: usize = self.matrix.iter().map(|row| row[class]).sum::<usize>() - tp;
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        }
    }

    pub fn macro_f1(&self) -> f64 {
        let k = self.matrix.len();
        (0..k).map(|c| self.f1(c)).sum::<f64>() / k as f64
    }
}

/// Accuracy and macro F1 of row-wise argmax predictions over `nodes`.
pub fn evaluate<T: Real>(probs: &Tensor<T>, labels: &[usize], nodes: &[usize]) -> Result<Metrics> {
    if nodes.is_empty() {
        return Err(Error::EmptySplit("selection".into()));
    }
    let k = probs.cols();
    let pred = probs.argmax_rows();
    let actual: Vec<usize> = nodes.iter().map(|&i| labels[i]).collect();
    let predicted: Vec<usize> = nodes.iter().map(|&i| pred[i]).collect();
    if let Some(&bad) = actual.iter().find(|&&a| a >= k) {
        return Err(Error::Contract(format!("label {bad} outside {k} classes")));
    }
    let cm = ConfusionMatrix::from_predictions(&actual, &predicted, k);
    Ok(Metrics {
        accuracy: cm.accuracy(),
        macro_f1: cm.macro_f1(),
    })
}

/// Area under the ROC curve of `scores` against binary `positive` flags,
/// via the rank-sum statistic; ties count one half.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut wins = 0.0;
    for (s_p, _) in scores.iter().zip(positive).filter(|(_, &p)| p) {
        for (s_n, _) in scores.iter().zip(positive).filter(|(_, &p)| !p) {
            if s_p > s_n {
                wins += 1.0;
            } else if s_p == s_n {
                wins += 0.5;
            }
        }
    }
    Some(wins / (n_pos * n_neg) as f64)
}
