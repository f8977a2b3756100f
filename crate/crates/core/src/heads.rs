//! Task heads: label posteriors, the label-conditioned energy, and the deep
//! per-task representation layers.
//!
//! A head for task `l` with bias `s` and hidden–label weights `U` (H × Y) gives
//!
//! ```text
//! p(y = k | h) = exp(s_k + Σ_j u_jk h_j) / Σ_k' exp(s_k' + Σ_j u_jk' h_j)
//! E_MT(v, h, y | u) = E_C(v, h | u) − Σ_l s^l·y^l − Σ_l hᵀU^l y^l
//! ```

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::layers::{dynamic_biases, energy_crbm, hidden_mean, HistoryWindow};
use crate::math::{softmax, softmax_in_place};
use crate::model::{CrbmLayerParams, TaskHead, TaskSpec};

/// Per-task class distributions, keyed by task name.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskPosterior(pub BTreeMap<String, Vec<f64>>);

impl TaskPosterior {
    pub fn get(&self, task: &str) -> Option<&[f64]> {
        self.0.get(task).map(Vec::as_slice)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Uniform distribution over each task's classes.
    pub fn uniform(tasks: &[TaskSpec]) -> Self {
        TaskPosterior(
            tasks
                .iter()
                .map(|t| (t.name.clone(), vec![1.0 / t.class_count as f64; t.class_count]))
                .collect(),
        )
    }

    /// Checks nonnegativity and unit sum per task.
    pub fn validate(&self) -> Result<()> {
        for (task, p) in &self.0 {
            let sum: f64 = p.iter().sum();
            if p.iter().any(|&x| x.is_nan() || x < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidLabel {
                    task: task.clone(),
                    reason: format!("posterior is not a distribution (sum = {sum})"),
                });
            }
        }
        Ok(())
    }
}

/// Softmax of `s + Uᵀh`.
pub fn label_posterior(head: &TaskHead, h: ArrayView1<f64>) -> Result<Array1<f64>> {
    if h.len() != head.weights.nrows() {
        return Err(Error::shape(
            format!("hidden vector for head `{}`", head.task.name),
            head.weights.nrows(),
            h.len(),
        ));
    }
    let logits = &head.label_bias + &head.weights.t().dot(&h);
    Ok(softmax(logits.view()))
}

/// Row-wise label posteriors for a batch of hidden vectors (`n × H` → `n × Y`).
pub fn label_posterior_batch(head: &TaskHead, h: ArrayView2<f64>) -> Array2<f64> {
    let mut logits = h.dot(&head.weights);
    logits += &head.label_bias;
    for row in logits.rows_mut() {
        softmax_in_place(row);
    }
    logits
}

/// Posteriors of every head of a layer.
pub fn layer_posterior(params: &CrbmLayerParams, h: ArrayView1<f64>) -> Result<TaskPosterior> {
    let mut out = BTreeMap::new();
    for head in &params.heads {
        out.insert(head.task.name.clone(), label_posterior(head, h)?.to_vec());
    }
    Ok(TaskPosterior(out))
}

pub fn one_hot(class: usize, class_count: usize) -> Array1<f64> {
    let mut y = Array1::zeros(class_count);
    y[class] = 1.0;
    y
}

/// One-hot label vectors for a layer's heads, in head order.
pub fn head_label_vectors(
    params: &CrbmLayerParams,
    labels: &BTreeMap<String, usize>,
) -> Result<Vec<Array1<f64>>> {
    params
        .heads
        .iter()
        .map(|head| {
            let class = *labels
                .get(&head.task.name)
                .ok_or_else(|| Error::MissingLabel(head.task.name.clone()))?;
            head.task.check_class(class)?;
            Ok(one_hot(class, head.class_count()))
        })
        .collect()
}

fn check_one_hots(params: &CrbmLayerParams, labels: &[Array1<f64>]) -> Result<()> {
    if labels.len() != params.heads.len() {
        if params.heads.is_empty() {
            return Err(Error::UnexpectedLabels);
        }
        return Err(Error::shape("label vectors", params.heads.len(), labels.len()));
    }
    for (head, y) in params.heads.iter().zip(labels) {
        if y.len() != head.class_count() {
            return Err(Error::shape(
                format!("label vector for `{}`", head.task.name),
                head.class_count(),
                y.len(),
            ));
        }
        let ones = y.iter().filter(|&&x| x == 1.0).count();
        let zeros = y.iter().filter(|&&x| x == 0.0).count();
        if ones != 1 || ones + zeros != y.len() {
            return Err(Error::InvalidLabel {
                task: head.task.name.clone(),
                reason: "label vector is not one-hot".into(),
            });
        }
    }
    Ok(())
}

/// Label part of the energy: `−Σ_l s^l·y^l − Σ_l hᵀU^l y^l`.
pub(crate) fn label_energy(params: &CrbmLayerParams, h: ArrayView1<f64>, labels: &[Array1<f64>]) -> f64 {
    let mut e = 0.0;
    for (head, y) in params.heads.iter().zip(labels) {
        for (k, &yk) in y.iter().enumerate() {
            if yk == 0.0 {
                continue;
            }
            e -= head.label_bias[k] * yk;
            for (j, &hj) in h.iter().enumerate() {
                e -= hj * head.weights[[j, k]] * yk;
            }
        }
    }
    e
}

/// Energy of a conditional layer with task heads; `labels` holds one one-hot
/// vector per head in head order (empty for a headless layer).
pub fn energy_mtcrbm(
    params: &CrbmLayerParams,
    v: ArrayView1<f64>,
    h: ArrayView1<f64>,
    labels: &[Array1<f64>],
    hist: &HistoryWindow,
) -> Result<f64> {
    if !(params.heads.is_empty() && labels.is_empty()) {
        check_one_hots(params, labels)?;
    }
    Ok(energy_crbm(params, v, h, hist)? + label_energy(params, h, labels))
}

/// Output of a deep per-task layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepHeadOutput {
    /// Hidden mean of the task-specific layer.
    pub hidden: Array1<f64>,
    /// Posterior of the layer's single head.
    pub posterior: Array1<f64>,
}

/// Runs a task-specific layer on the shared layer's hidden mean. `hist` is the
/// window of previous shared hidden means.
pub fn deep_task_head_forward(
    deep_head: &CrbmLayerParams,
    shared_h_mean: ArrayView1<f64>,
    hist: &HistoryWindow,
) -> Result<DeepHeadOutput> {
    if deep_head.heads.len() != 1 {
        return Err(Error::shape("deep head task count", 1, deep_head.heads.len()));
    }
    if shared_h_mean.len() != deep_head.visible_dim {
        return Err(Error::shape("shared hidden mean", deep_head.visible_dim, shared_h_mean.len()));
    }
    let (_, d) = dynamic_biases(deep_head, hist)?;
    let hidden = hidden_mean(deep_head, shared_h_mean, d.view(), None)?;
    let posterior = label_posterior(&deep_head.heads[0], hidden.view())?;
    Ok(DeepHeadOutput { hidden, posterior })
}
