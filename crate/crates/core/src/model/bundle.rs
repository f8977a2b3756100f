use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::layer::{fill_gaussian, init_heads, CrbmLayerParams, FusionModel, VisibleKind};
use super::task::{label_edge_audit, validate_task_list, FlatLabeling, LabelEdgeAudit, TaskSpec};
use crate::error::{Error, Result};
use crate::normalize::Normalization;

/// Which member of the model family a bundle holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Generative conditional RBM, no labels.
    Crbm,
    /// One discriminative head over the Cartesian product of all tasks.
    Dcrbm,
    /// One factored head per task on a shared hidden layer.
    Mtcrbm,
    /// Shared layer plus a task-specific conditional layer (and head) per task.
    MtcrbmDeep,
    /// Per-modality multi-task layers joined by a multi-task fusion layer.
    Mtmcrbm,
    /// Fusion model with a task-specific conditional layer per task on top.
    MtmcrbmDeep,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Crbm,
        ModelKind::Dcrbm,
        ModelKind::Mtcrbm,
        ModelKind::MtcrbmDeep,
        ModelKind::Mtmcrbm,
        ModelKind::MtmcrbmDeep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Crbm => "crbm",
            ModelKind::Dcrbm => "dcrbm",
            ModelKind::Mtcrbm => "mtcrbm",
            ModelKind::MtcrbmDeep => "mtcrbm_deep",
            ModelKind::Mtmcrbm => "mtmcrbm",
            ModelKind::MtmcrbmDeep => "mtmcrbm_deep",
        }
    }

    pub fn is_multimodal(self) -> bool {
        matches!(self, ModelKind::Mtmcrbm | ModelKind::MtmcrbmDeep)
    }

    pub fn is_deep(self) -> bool {
        matches!(self, ModelKind::MtcrbmDeep | ModelKind::MtmcrbmDeep)
    }

    pub fn is_supervised(self) -> bool {
        self != ModelKind::Crbm
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_").to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))
    }
}

/// Layer stack of a bundle: one conditional layer, or a fusion model.
#[derive(Debug, Clone, PartialEq)]
pub enum Layers {
    Single {
        modality: String,
        layer: CrbmLayerParams,
    },
    Fused(FusionModel),
}

impl Layers {
    pub fn modality_ids(&self) -> Vec<&str> {
        match self {
            Layers::Single { modality, .. } => vec![modality.as_str()],
            Layers::Fused(f) => f.unimodal.keys().map(String::as_str).collect(),
        }
    }

    pub fn unimodal(&self, modality: &str) -> Option<&CrbmLayerParams> {
        match self {
            Layers::Single { modality: m, layer } if m == modality => Some(layer),
            Layers::Single { .. } => None,
            Layers::Fused(f) => f.unimodal.get(modality),
        }
    }

    /// Hidden width of the layer that the task heads (or deep heads) sit on.
    pub fn top_hidden_dim(&self) -> usize {
        match self {
            Layers::Single { layer, .. } => layer.hidden_dim,
            Layers::Fused(f) => f.fusion.hidden_dim,
        }
    }
}

/// A complete model: parameters, task declarations and input standardization.
///
/// Immutable once built; training returns a new bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub kind: ModelKind,
    pub tasks: Vec<TaskSpec>,
    pub normalization: BTreeMap<String, Normalization>,
    pub layers: Layers,
    /// Task-specific conditional layers keyed by task name (deep kinds only).
    pub deep_heads: BTreeMap<String, CrbmLayerParams>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub id: String,
    pub visible_dim: usize,
}

/// Architecture of a model to be initialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub modalities: Vec<ModalitySpec>,
    /// Hidden units of each unimodal (or the single) layer.
    pub hidden_dim: usize,
    /// Number of past frames feeding the dynamic biases.
    pub history_order: usize,
    #[serde(default)]
    pub fusion_hidden_dim: Option<usize>,
    #[serde(default)]
    pub fusion_history_order: Option<usize>,
    #[serde(default)]
    pub deep_hidden_dim: Option<usize>,
    #[serde(default)]
    pub deep_history_order: Option<usize>,
    pub tasks: Vec<TaskSpec>,
    #[serde(default = "default_visible_kind")]
    pub visible_kind: VisibleKind,
}

fn default_visible_kind() -> VisibleKind {
    VisibleKind::Gaussian
}

impl ModelConfig {
    pub fn new(
        kind: ModelKind,
        modalities: impl IntoIterator<Item = (String, usize)>,
        hidden_dim: usize,
        history_order: usize,
        tasks: Vec<TaskSpec>,
    ) -> Self {
        ModelConfig {
            kind,
            modalities: modalities
                .into_iter()
                .map(|(id, visible_dim)| ModalitySpec { id, visible_dim })
                .collect(),
            hidden_dim,
            history_order,
            fusion_hidden_dim: None,
            fusion_history_order: None,
            deep_hidden_dim: None,
            deep_history_order: None,
            tasks,
            visible_kind: VisibleKind::Gaussian,
        }
    }

    pub fn fusion_hidden(&self) -> usize {
        self.fusion_hidden_dim
            .unwrap_or(self.hidden_dim * self.modalities.len())
    }

    pub fn fusion_history(&self) -> usize {
        self.fusion_history_order.unwrap_or(self.history_order)
    }

    pub fn deep_hidden(&self) -> usize {
        self.deep_hidden_dim.unwrap_or(self.hidden_dim)
    }

    pub fn deep_history(&self) -> usize {
        self.deep_history_order.unwrap_or(self.history_order)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(Error::Config("at least one modality is required".into()));
        }
        if !self.kind.is_multimodal() && self.modalities.len() != 1 {
            return Err(Error::Config(format!(
                "kind `{}` takes exactly one modality, got {}",
                self.kind,
                self.modalities.len()
            )));
        }
        for (i, m) in self.modalities.iter().enumerate() {
            if m.visible_dim == 0 {
                return Err(Error::Config(format!("modality `{}` has zero dimension", m.id)));
            }
            if self.modalities[..i].iter().any(|o| o.id == m.id) {
                return Err(Error::Config(format!("duplicate modality `{}`", m.id)));
            }
        }
        if self.hidden_dim == 0 || self.fusion_hidden() == 0 || self.deep_hidden() == 0 {
            return Err(Error::Config("hidden dimensions must be positive".into()));
        }
        validate_task_list(&self.tasks)?;
        if self.kind.is_supervised() && self.tasks.is_empty() {
            return Err(Error::Config(format!("kind `{}` needs at least one task", self.kind)));
        }
        Ok(())
    }
}

/// Builds a freshly initialized model. Weights are Gaussian(0, 0.01²), biases
/// zero, standardization the identity. Same config and seed give bit-identical
/// parameters.
pub fn new_model(config: &ModelConfig, seed: u64) -> Result<ModelBundle> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = config.kind;
    let tasks = if kind.is_supervised() {
        config.tasks.clone()
    } else {
        Vec::new()
    };
    let unimodal_heads: Vec<TaskSpec> = match kind {
        ModelKind::Crbm | ModelKind::MtcrbmDeep => Vec::new(),
        ModelKind::Dcrbm => vec![FlatLabeling::new(&tasks)?.product_task()],
        ModelKind::Mtcrbm | ModelKind::Mtmcrbm | ModelKind::MtmcrbmDeep => tasks.clone(),
    };

    let mut modalities = config.modalities.clone();
    modalities.sort_by(|a, b| a.id.cmp(&b.id));
    let mut unimodal = BTreeMap::new();
    for m in &modalities {
        let layer = CrbmLayerParams::initialized(
            m.visible_dim,
            config.hidden_dim,
            config.history_order,
            config.visible_kind,
            &unimodal_heads,
            &mut rng,
        );
        unimodal.insert(m.id.clone(), layer);
    }

    let layers = if kind.is_multimodal() {
        let input: usize = unimodal.values().map(|l: &CrbmLayerParams| l.hidden_dim).sum();
        let mut fusion = CrbmLayerParams::zeros(
            input,
            config.fusion_hidden(),
            config.fusion_history(),
            VisibleKind::Binary,
        );
        fill_gaussian(&mut fusion.hidden_ar, &mut rng);
        fill_gaussian(&mut fusion.weights, &mut rng);
        if kind == ModelKind::Mtmcrbm {
            fusion.heads = init_heads(&tasks, fusion.hidden_dim, &mut rng);
        }
        Layers::Fused(FusionModel::new(unimodal, fusion)?)
    } else {
        let (modality, layer) = unimodal.into_iter().next().expect("one modality");
        Layers::Single { modality, layer }
    };

    let mut deep_heads = BTreeMap::new();
    if kind.is_deep() {
        let base = layers.top_hidden_dim();
        for t in &tasks {
            let layer = CrbmLayerParams::initialized(
                base,
                config.deep_hidden(),
                config.deep_history(),
                VisibleKind::Binary,
                std::slice::from_ref(t),
                &mut rng,
            );
            deep_heads.insert(t.name.clone(), layer);
        }
    }

    let normalization = modalities
        .iter()
        .map(|m| (m.id.clone(), Normalization::identity(m.visible_dim)))
        .collect();
    let bundle = ModelBundle {
        kind,
        tasks,
        normalization,
        layers,
        deep_heads,
    };
    bundle.validate()?;
    Ok(bundle)
}

impl ModelBundle {
    pub fn modality_ids(&self) -> Vec<&str> {
        self.layers.modality_ids()
    }

    pub fn task(&self, name: &str) -> Result<&TaskSpec> {
        self.tasks
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::UnknownTask(name.to_string()))
    }

    /// The single conditional layer of a non-fusion model.
    pub fn single_layer(&self) -> Option<(&str, &CrbmLayerParams)> {
        match &self.layers {
            Layers::Single { modality, layer } => Some((modality, layer)),
            Layers::Fused(_) => None,
        }
    }

    pub fn fusion_model(&self) -> Option<&FusionModel> {
        match &self.layers {
            Layers::Fused(f) => Some(f),
            Layers::Single { .. } => None,
        }
    }

    /// Flattened labelling used by `dcrbm` bundles.
    pub fn flat_labeling(&self) -> Option<FlatLabeling> {
        (self.kind == ModelKind::Dcrbm).then(|| FlatLabeling::new(&self.tasks).expect("validated"))
    }

    /// Hidden–label parameter counts for factored heads versus a flattened head,
    /// using the hidden width of the classification layer.
    pub fn label_edge_audit(&self) -> LabelEdgeAudit {
        label_edge_audit(self.layers.top_hidden_dim(), &self.tasks)
    }

    /// Checks that the parameter blocks present match the model kind, plus all
    /// shape and finiteness invariants.
    pub fn validate(&self) -> Result<()> {
        validate_task_list(&self.tasks)?;
        let kind = self.kind;
        let mismatch = |reason: String| Error::KindMismatch {
            kind: kind.to_string(),
            reason,
        };

        match (&self.layers, kind.is_multimodal()) {
            (Layers::Single { modality, layer }, false) => {
                layer.validate(&format!("unimodal[{modality}]"))?;
                let expected: Vec<TaskSpec> = match kind {
                    ModelKind::Crbm | ModelKind::MtcrbmDeep => Vec::new(),
                    ModelKind::Dcrbm => {
                        if self.tasks.is_empty() {
                            return Err(mismatch("no tasks declared".into()));
                        }
                        vec![FlatLabeling::new(&self.tasks)?.product_task()]
                    }
                    _ => self.tasks.clone(),
                };
                if layer.head_tasks() != expected {
                    return Err(mismatch(format!(
                        "layer heads {:?} do not match the expected heads {:?}",
                        names(&layer.head_tasks()),
                        names(&expected)
                    )));
                }
            }
            (Layers::Fused(f), true) => {
                f.validate()?;
                for (id, layer) in &f.unimodal {
                    if layer.head_tasks() != self.tasks {
                        return Err(mismatch(format!("unimodal[{id}] heads do not match the task list")));
                    }
                }
                let fusion_expected = if kind == ModelKind::Mtmcrbm {
                    self.tasks.clone()
                } else {
                    Vec::new()
                };
                if f.fusion.head_tasks() != fusion_expected {
                    return Err(mismatch("fusion heads do not match the model kind".into()));
                }
            }
            (Layers::Single { .. }, true) => {
                return Err(mismatch("a fusion layer is required".into()))
            }
            (Layers::Fused(_), false) => {
                return Err(mismatch("unexpected fusion layer".into()))
            }
        }
        if kind.is_supervised() && self.tasks.is_empty() {
            return Err(mismatch("no tasks declared".into()));
        }

        if kind.is_deep() {
            let names_present: Vec<&String> = self.deep_heads.keys().collect();
            let mut expected: Vec<&String> = self.tasks.iter().map(|t| &t.name).collect();
            expected.sort();
            if names_present != expected {
                return Err(mismatch(format!(
                    "deep heads {names_present:?} do not cover tasks {expected:?}"
                )));
            }
            let base = self.layers.top_hidden_dim();
            for (name, layer) in &self.deep_heads {
                let block = format!("deep_heads[{name}]");
                layer.validate(&block)?;
                if layer.visible_dim != base {
                    return Err(Error::shape(format!("{block}.visible_dim"), base, layer.visible_dim));
                }
                if layer.heads.len() != 1 || &layer.heads[0].task != self.task(name)? {
                    return Err(mismatch(format!("{block} must carry exactly the head for `{name}`")));
                }
            }
        } else if !self.deep_heads.is_empty() {
            return Err(mismatch("deep heads present on a non-deep model".into()));
        }

        let ids = self.modality_ids();
        let norm_ids: Vec<&str> = self.normalization.keys().map(String::as_str).collect();
        if norm_ids != ids {
            return Err(Error::Data(format!(
                "normalization modalities {norm_ids:?} do not match model modalities {ids:?}"
            )));
        }
        for id in ids {
            let n = &self.normalization[id];
            n.validate(&format!("normalization[{id}]"))?;
            let d = self.layers.unimodal(id).expect("present").visible_dim;
            if n.dim() != d {
                return Err(Error::shape(format!("normalization[{id}]"), d, n.dim()));
            }
        }
        Ok(())
    }
}

fn names(tasks: &[TaskSpec]) -> Vec<&str> {
    tasks.iter().map(|t| t.name.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tasks() -> Vec<TaskSpec> {
        vec![
            TaskSpec::new("AC", 4).unwrap(),
            TaskSpec::new("AF", 4).unwrap(),
            TaskSpec::new("G", 2).unwrap(),
        ]
    }

    #[test]
    fn three_task_configuration_shapes() {
        let cfg = ModelConfig::new(ModelKind::Mtcrbm, [("mocap".to_string(), 42)], 30, 10, tasks());
        let b = new_model(&cfg, 1).unwrap();
        let (_, layer) = b.single_layer().unwrap();
        assert_eq!(layer.weights.dim(), (42, 30));
        assert_eq!(layer.visible_ar.dim(), (420, 42));
        assert_eq!(layer.hidden_ar.dim(), (420, 30));
        let shapes: Vec<_> = layer.heads.iter().map(|h| h.weights.dim()).collect();
        assert_eq!(shapes, vec![(30, 4), (30, 4), (30, 2)]);
        assert_eq!(layer.label_edge_count(), b.label_edge_audit().factored);
    }

    #[test]
    fn zero_history_degenerates_to_rbm() {
        let cfg = ModelConfig::new(ModelKind::Crbm, [("m".to_string(), 1)], 1, 0, vec![]);
        let b = new_model(&cfg, 0).unwrap();
        let (_, layer) = b.single_layer().unwrap();
        assert_eq!(layer.visible_ar.dim(), (0, 1));
        assert_eq!(layer.hidden_ar.dim(), (0, 1));
    }

    #[test]
    fn initialization_is_deterministic() {
        for kind in ModelKind::ALL {
            let mods: Vec<(String, usize)> = if kind.is_multimodal() {
                vec![("b".into(), 3), ("a".into(), 2)]
            } else {
                vec![("a".into(), 2)]
            };
            let cfg = ModelConfig::new(kind, mods, 4, 2, tasks());
            let x = new_model(&cfg, 99).unwrap();
            let y = new_model(&cfg, 99).unwrap();
            assert_eq!(x, y, "{kind}");
            let z = new_model(&cfg, 100).unwrap();
            assert_ne!(x, z, "{kind}");
        }
    }

    #[test]
    fn dcrbm_uses_one_flattened_head() {
        let cfg = ModelConfig::new(ModelKind::Dcrbm, [("m".to_string(), 5)], 30, 1, tasks());
        let b = new_model(&cfg, 0).unwrap();
        let (_, layer) = b.single_layer().unwrap();
        assert_eq!(layer.heads.len(), 1);
        assert_eq!(layer.heads[0].weights.dim(), (30, 32));
        assert_eq!(layer.label_edge_count(), b.label_edge_audit().flattened);
    }

    #[test]
    fn kind_parsing_accepts_dashes() {
        assert_eq!("mtcrbm-deep".parse::<ModelKind>().unwrap(), ModelKind::MtcrbmDeep);
        assert!("hmm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn validation_rejects_missing_heads() {
        let cfg = ModelConfig::new(ModelKind::Mtcrbm, [("m".to_string(), 3)], 4, 1, tasks());
        let mut b = new_model(&cfg, 0).unwrap();
        if let Layers::Single { layer, .. } = &mut b.layers {
            layer.heads.clear();
        }
        assert!(matches!(b.validate(), Err(Error::KindMismatch { .. })));
    }
}
