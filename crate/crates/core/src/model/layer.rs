use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::task::{validate_task_list, TaskSpec};
use crate::error::{Error, Result};

/// Standard deviation of the zero-mean Gaussian used for every weight block.
pub const INIT_WEIGHT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibleKind {
    /// Real-valued units with unit variance around the conditional mean.
    Gaussian,
    /// Logistic units.
    Binary,
}

/// Softmax classifier over one task, attached to a hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskHead {
    pub task: TaskSpec,
    /// Per-class bias, length `class_count`.
    pub label_bias: Array1<f64>,
    /// Hidden–label weights, `hidden_dim × class_count`.
    pub weights: Array2<f64>,
}

impl TaskHead {
    pub fn zeros(task: TaskSpec, hidden_dim: usize) -> Self {
        let y = task.class_count;
        TaskHead {
            task,
            label_bias: Array1::zeros(y),
            weights: Array2::zeros((hidden_dim, y)),
        }
    }

    pub fn class_count(&self) -> usize {
        self.task.class_count
    }

    fn validate(&self, hidden_dim: usize, block: &str) -> Result<()> {
        self.task.validate()?;
        let y = self.task.class_count;
        check_vec(&self.label_bias, y, &format!("{block}.heads[{}].label_bias", self.task.name))?;
        check_mat(
            &self.weights,
            (hidden_dim, y),
            &format!("{block}.heads[{}].weights", self.task.name),
        )
    }
}

/// Parameters of one conditional RBM layer, optionally with task heads.
///
/// History windows are the previous `history_order` visible frames
/// concatenated oldest-first, so the autoregressive matrices have
/// `history_order · visible_dim` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbmLayerParams {
    pub visible_dim: usize,
    pub hidden_dim: usize,
    pub history_order: usize,
    pub visible_kind: VisibleKind,
    /// Static visible bias, length D.
    pub visible_bias: Array1<f64>,
    /// Static hidden bias, length H.
    pub hidden_bias: Array1<f64>,
    /// History → visible bias, `(N·D) × D`.
    pub visible_ar: Array2<f64>,
    /// History → hidden bias, `(N·D) × H`.
    pub hidden_ar: Array2<f64>,
    /// Visible–hidden weights, `D × H`.
    pub weights: Array2<f64>,
    pub heads: Vec<TaskHead>,
}

impl CrbmLayerParams {
    pub fn zeros(
        visible_dim: usize,
        hidden_dim: usize,
        history_order: usize,
        visible_kind: VisibleKind,
    ) -> Self {
        let hist = history_order * visible_dim;
        CrbmLayerParams {
            visible_dim,
            hidden_dim,
            history_order,
            visible_kind,
            visible_bias: Array1::zeros(visible_dim),
            hidden_bias: Array1::zeros(hidden_dim),
            visible_ar: Array2::zeros((hist, visible_dim)),
            hidden_ar: Array2::zeros((hist, hidden_dim)),
            weights: Array2::zeros((visible_dim, hidden_dim)),
            heads: Vec::new(),
        }
    }

    /// Gaussian(0, 0.01²) weights, zero biases. Draw order is
    /// visible_ar, hidden_ar, weights, then each head's weights.
    pub fn initialized<R: Rng + ?Sized>(
        visible_dim: usize,
        hidden_dim: usize,
        history_order: usize,
        visible_kind: VisibleKind,
        tasks: &[TaskSpec],
        rng: &mut R,
    ) -> Self {
        let mut layer = Self::zeros(visible_dim, hidden_dim, history_order, visible_kind);
        fill_gaussian(&mut layer.visible_ar, rng);
        fill_gaussian(&mut layer.hidden_ar, rng);
        fill_gaussian(&mut layer.weights, rng);
        layer.heads = init_heads(tasks, hidden_dim, rng);
        layer
    }

    pub fn history_len(&self) -> usize {
        self.history_order * self.visible_dim
    }

    pub fn is_generative_only(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn head(&self, task: &str) -> Option<&TaskHead> {
        self.heads.iter().find(|h| h.task.name == task)
    }

    pub fn head_tasks(&self) -> Vec<TaskSpec> {
        self.heads.iter().map(|h| h.task.clone()).collect()
    }

    /// Number of hidden–label weights across all heads.
    pub fn label_edge_count(&self) -> usize {
        self.heads.iter().map(|h| h.weights.len()).sum()
    }

    /// Checks every shape invariant and that all values are finite.
    pub fn validate(&self, block: &str) -> Result<()> {
        if self.visible_dim == 0 {
            return Err(Error::shape(format!("{block}.visible_dim"), "≥ 1", 0));
        }
        if self.hidden_dim == 0 {
            return Err(Error::shape(format!("{block}.hidden_dim"), "≥ 1", 0));
        }
        let (d, h, hist) = (self.visible_dim, self.hidden_dim, self.history_len());
        check_vec(&self.visible_bias, d, &format!("{block}.visible_bias"))?;
        check_vec(&self.hidden_bias, h, &format!("{block}.hidden_bias"))?;
        check_mat(&self.visible_ar, (hist, d), &format!("{block}.visible_ar"))?;
        check_mat(&self.hidden_ar, (hist, h), &format!("{block}.hidden_ar"))?;
        check_mat(&self.weights, (d, h), &format!("{block}.weights"))?;
        for head in &self.heads {
            head.validate(h, block)?;
        }
        let tasks = self.head_tasks();
        validate_task_list(&tasks).map_err(|e| Error::Config(format!("{block}: {e}")))?;
        Ok(())
    }
}

pub(crate) fn init_heads<R: Rng + ?Sized>(
    tasks: &[TaskSpec],
    hidden_dim: usize,
    rng: &mut R,
) -> Vec<TaskHead> {
    tasks
        .iter()
        .map(|t| {
            let mut head = TaskHead::zeros(t.clone(), hidden_dim);
            fill_gaussian(&mut head.weights, rng);
            head
        })
        .collect()
}

pub(crate) fn fill_gaussian<R: Rng + ?Sized>(m: &mut Array2<f64>, rng: &mut R) {
    let normal = Normal::new(0.0, INIT_WEIGHT_SCALE).expect("valid normal");
    for x in m.iter_mut() {
        *x = normal.sample(rng);
    }
}

pub(crate) fn check_vec(v: &Array1<f64>, len: usize, block: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::shape(block, len, v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { block: block.into() });
    }
    Ok(())
}

pub(crate) fn check_mat(m: &Array2<f64>, shape: (usize, usize), block: &str) -> Result<()> {
    if m.dim() != shape {
        return Err(Error::shape(
            block,
            format!("{}×{}", shape.0, shape.1),
            format!("{}×{}", m.nrows(), m.ncols()),
        ));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { block: block.into() });
    }
    Ok(())
}

/// Per-modality layers joined by a fusion layer over their concatenated hidden units.
///
/// The fusion layer is stored as a [`CrbmLayerParams`] whose visible units are the
/// unimodal hidden units concatenated in modality-id order (the `BTreeMap`
/// iteration order). Its `hidden_bias` is the fusion bias, its `hidden_ar`
/// maps the history of concatenated unimodal hidden means onto the fusion
/// units, and its `weights` couple unimodal and fusion hidden units. The
/// fusion layer's `visible_bias` and `visible_ar` take no part in the energy
/// and are kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub unimodal: BTreeMap<String, CrbmLayerParams>,
    pub fusion: CrbmLayerParams,
}

impl FusionModel {
    pub fn new(unimodal: BTreeMap<String, CrbmLayerParams>, fusion: CrbmLayerParams) -> Result<Self> {
        let model = FusionModel { unimodal, fusion };
        model.validate()?;
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.unimodal.values().map(|l| l.hidden_dim).sum()
    }

    /// Offsets of each modality's block inside the fusion input.
    pub fn offsets(&self) -> BTreeMap<&str, (usize, usize)> {
        let mut start = 0;
        self.unimodal
            .iter()
            .map(|(id, l)| {
                let range = (start, start + l.hidden_dim);
                start += l.hidden_dim;
                (id.as_str(), range)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.unimodal.is_empty() {
            return Err(Error::Config("fusion model needs at least one modality".into()));
        }
        for (id, layer) in &self.unimodal {
            layer.validate(&format!("unimodal[{id}]"))?;
        }
        self.fusion.validate("fusion")?;
        if self.fusion.visible_dim != self.input_dim() {
            return Err(Error::shape(
                "fusion.visible_dim",
                self.input_dim(),
                self.fusion.visible_dim,
            ));
        }
        if self.fusion.visible_kind != VisibleKind::Binary {
            return Err(Error::Config("fusion layer visible units must be binary".into()));
        }
        if self.fusion.visible_bias.iter().any(|&x| x != 0.0)
            || self.fusion.visible_ar.iter().any(|&x| x != 0.0)
        {
            return Err(Error::Config(
                "fusion.visible_bias and fusion.visible_ar are not part of the model and must be zero".into(),
            ));
        }
        // All unimodal layers share one task list; the fusion layer carries the
        // same list unless it has no heads at all.
        let reference = self.unimodal.values().next().map(|l| l.head_tasks()).unwrap_or_default();
        for (id, layer) in &self.unimodal {
            if layer.head_tasks() != reference {
                return Err(Error::Config(format!(
                    "modality `{id}` carries task heads inconsistent with the other modalities"
                )));
            }
        }
        if !self.fusion.heads.is_empty() && self.fusion.head_tasks() != reference {
            return Err(Error::Config(
                "fusion layer task heads differ from the unimodal task heads".into(),
            ));
        }
        Ok(())
    }
}
