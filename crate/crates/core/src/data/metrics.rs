//! Per-task accuracy and confusion matrices.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskMetrics {
    pub accuracy: f64,
    /// `confusion[truth][predicted]`; row `k` sums to the support of class `k`.
    pub confusion: Vec<Vec<usize>>,
    pub count: usize,
}

/// Accuracy and confusion matrix for one task. An empty input has accuracy 0.
pub fn metrics(predictions: &[usize], truth: &[usize], class_count: usize) -> Result<TaskMetrics> {
    if predictions.len() != truth.len() {
        return Err(Error::shape("predictions", truth.len(), predictions.len()));
    }
    let mut confusion = vec![vec![0usize; class_count]; class_count];
    let mut correct = 0;
    for (&p, &t) in predictions.iter().zip(truth) {
        if p >= class_count || t >= class_count {
            return Err(Error::ClassOutOfRange {
                task: "metrics".into(),
                class: p.max(t),
                class_count,
            });
        }
        confusion[t][p] += 1;
        correct += usize::from(p == t);
    }
    let count = truth.len();
    let accuracy = if count == 0 { 0.0 } else { correct as f64 / count as f64 };
    Ok(TaskMetrics {
        accuracy,
        confusion,
        count,
    })
}
