//! Bottom-up classification.
//!
//! Hidden units are set to their conditional means given the layer below,
//! without label terms (labels are what is being inferred). The topmost
//! layer's heads, or the deep per-task layers, give the per-frame posteriors.
//! A sequence's posterior is the mean of its frame posteriors.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::metrics::{metrics, TaskMetrics};
use crate::error::{Error, Result};
use crate::fusion::{fusion_forward, fusion_timeline, part};
use crate::heads::{deep_task_head_forward, label_posterior, label_posterior_batch, layer_posterior, TaskPosterior};
use crate::layers::{dynamic_biases, hidden_mean, hidden_mean_sequence, HistoryWindow};
use crate::math::argmax;
use crate::model::{CrbmLayerParams, Dataset, Layers, ModelBundle, MultimodalSequence, TaskSpec};
use crate::normalize::mean_abs;

/// Per-frame posteriors of a sequence, `T × Y` per task.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTimeline {
    /// Posteriors used for the decision.
    pub decision: BTreeMap<String, Array2<f64>>,
    /// Per-modality posteriors of a fusion model, reported alongside.
    pub unimodal: BTreeMap<String, BTreeMap<String, Array2<f64>>>,
}

/// Standardizes each modality with the model's stored transform. With a
/// tolerance, rejects input whose standardized mean |z| exceeds it, which
/// signals frames in different units from the training data.
pub fn standardize_parts(
    bundle: &ModelBundle,
    seq: &MultimodalSequence,
    tolerance: Option<f64>,
) -> Result<BTreeMap<String, Array2<f64>>> {
    let mut out = BTreeMap::new();
    for id in bundle.modality_ids() {
        let frames = &seq.part(id)?.frames;
        let z = bundle.normalization[id].apply(frames.view())?;
        if let Some(tol) = tolerance {
            let m = mean_abs(z.view());
            if m > tol {
                return Err(Error::NotStandardized {
                    mean_abs_z: m,
                    tolerance: tol,
                });
            }
        }
        out.insert(id.to_string(), z);
    }
    Ok(out)
}

fn heads_timeline(layer: &CrbmLayerParams, hidden: ArrayView2<f64>) -> BTreeMap<String, Array2<f64>> {
    layer
        .heads
        .iter()
        .map(|h| (h.task.name.clone(), label_posterior_batch(h, hidden)))
        .collect()
}

/// Decision posteriors from the top hidden timeline: deep heads, a flattened
/// head (marginalized), or plain heads.
fn decide(bundle: &ModelBundle, top_layer: &CrbmLayerParams, top: ArrayView2<f64>) -> BTreeMap<String, Array2<f64>> {
    if bundle.kind.is_deep() {
        return bundle
            .deep_heads
            .iter()
            .map(|(task, deep)| {
                let h = hidden_mean_sequence(deep, top);
                (task.clone(), label_posterior_batch(&deep.heads[0], h.view()))
            })
            .collect();
    }
    if let Some(flat) = bundle.flat_labeling() {
        let joint = label_posterior_batch(&top_layer.heads[0], top);
        let mut out: BTreeMap<String, Array2<f64>> = flat
            .tasks()
            .iter()
            .map(|t| (t.name.clone(), Array2::zeros((top.nrows(), t.class_count))))
            .collect();
        for (i, row) in joint.rows().into_iter().enumerate() {
            let marginals = flat.marginals(row.as_slice().expect("contiguous row"));
            for (t, m) in flat.tasks().iter().zip(marginals) {
                out.get_mut(&t.name).expect("task").row_mut(i).assign(&Array1::from(m));
            }
        }
        return out;
    }
    heads_timeline(top_layer, top)
}

/// Posterior timelines for standardized frames.
pub fn posterior_timeline(
    bundle: &ModelBundle,
    parts: &BTreeMap<String, Array2<f64>>,
) -> Result<PosteriorTimeline> {
    match &bundle.layers {
        Layers::Single { modality, layer } => {
            let frames = part(parts, modality)?;
            if frames.ncols() != layer.visible_dim {
                return Err(Error::shape(format!("frames of modality `{modality}`"), layer.visible_dim, frames.ncols()));
            }
            let h = hidden_mean_sequence(layer, frames.view());
            Ok(PosteriorTimeline {
                decision: decide(bundle, layer, h.view()),
                unimodal: BTreeMap::new(),
            })
        }
        Layers::Fused(model) => {
            let views: BTreeMap<String, ArrayView2<f64>> = parts.iter().map(|(k, v)| (k.clone(), v.view())).collect();
            let (uni, _, top) = fusion_timeline(model, &views)?;
            let unimodal = model
                .unimodal
                .iter()
                .map(|(id, layer)| (id.clone(), heads_timeline(layer, uni[id].view())))
                .collect();
            Ok(PosteriorTimeline {
                decision: decide(bundle, &model.fusion, top.view()),
                unimodal,
            })
        }
    }
}

/// Frame-level inputs that depend on the past: visible history per modality,
/// the fusion-input history, and the history of top hidden means feeding the
/// deep heads.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameContext {
    pub histories: BTreeMap<String, HistoryWindow>,
    pub fusion_history: Option<HistoryWindow>,
    pub deep_history: Option<HistoryWindow>,
}

impl FrameContext {
    /// Context of the first frame of a sequence (all padding).
    pub fn start(bundle: &ModelBundle) -> Self {
        let mut histories = BTreeMap::new();
        let (fusion_history, top_dim) = match &bundle.layers {
            Layers::Single { modality, layer } => {
                histories.insert(modality.clone(), HistoryWindow::zeros(layer.history_order, layer.visible_dim));
                (None, layer.hidden_dim)
            }
            Layers::Fused(f) => {
                for (id, l) in &f.unimodal {
                    histories.insert(id.clone(), HistoryWindow::zeros(l.history_order, l.visible_dim));
                }
                (
                    Some(HistoryWindow::zeros(f.fusion.history_order, f.fusion.visible_dim)),
                    f.fusion.hidden_dim,
                )
            }
        };
        let deep_history = bundle
            .deep_heads
            .values()
            .next()
            .map(|d| HistoryWindow::zeros(d.history_order, top_dim));
        FrameContext {
            histories,
            fusion_history,
            deep_history,
        }
    }

    /// Context of frame `t` of a standardized sequence.
    pub fn at(bundle: &ModelBundle, parts: &BTreeMap<String, Array2<f64>>, t: usize) -> Result<Self> {
        let mut ctx = FrameContext::start(bundle);
        for (id, w) in ctx.histories.iter_mut() {
            *w = HistoryWindow::from_frames(part(parts, id)?.view(), t, w.order());
        }
        let top = match &bundle.layers {
            Layers::Single { modality, layer } => hidden_mean_sequence(layer, parts[modality].view()),
            Layers::Fused(f) => {
                let views = parts.iter().map(|(k, v)| (k.clone(), v.view())).collect();
                let (_, input, top) = fusion_timeline(f, &views)?;
                ctx.fusion_history = Some(HistoryWindow::from_frames(input.view(), t, f.fusion.history_order));
                top
            }
        };
        if let Some(w) = &mut ctx.deep_history {
            *w = HistoryWindow::from_frames(top.view(), t, w.order());
        }
        Ok(ctx)
    }
}

/// Posteriors for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePosterior {
    pub decision: TaskPosterior,
    pub unimodal: BTreeMap<String, TaskPosterior>,
}

fn decide_frame(
    bundle: &ModelBundle,
    top_layer: &CrbmLayerParams,
    top: &Array1<f64>,
    ctx: &FrameContext,
) -> Result<TaskPosterior> {
    if bundle.kind.is_deep() {
        let hist = ctx
            .deep_history
            .as_ref()
            .ok_or_else(|| Error::Data("missing deep-head history".into()))?;
        let mut out = BTreeMap::new();
        for (task, deep) in &bundle.deep_heads {
            out.insert(task.clone(), deep_task_head_forward(deep, top.view(), hist)?.posterior.to_vec());
        }
        return Ok(TaskPosterior(out));
    }
    if let Some(flat) = bundle.flat_labeling() {
        let joint = label_posterior(&top_layer.heads[0], top.view())?;
        let marginals = flat.marginals(joint.as_slice().expect("contiguous"));
        return Ok(TaskPosterior(
            flat.tasks().iter().map(|t| t.name.clone()).zip(marginals).collect(),
        ));
    }
    layer_posterior(top_layer, top.view())
}

/// Posteriors for one standardized frame per modality.
pub fn classify_frame(
    bundle: &ModelBundle,
    frames: &BTreeMap<String, Array1<f64>>,
    ctx: &FrameContext,
) -> Result<FramePosterior> {
    match &bundle.layers {
        Layers::Single { modality, layer } => {
            let v = part(frames, modality)?;
            let (_, d) = dynamic_biases(layer, part(&ctx.histories, modality)?)?;
            let h = hidden_mean(layer, v.view(), d.view(), None)?;
            Ok(FramePosterior {
                decision: decide_frame(bundle, layer, &h, ctx)?,
                unimodal: BTreeMap::new(),
            })
        }
        Layers::Fused(model) => {
            let fusion_hist = ctx
                .fusion_history
                .as_ref()
                .ok_or_else(|| Error::Data("missing fusion history".into()))?;
            let state = fusion_forward(model, frames, &ctx.histories, fusion_hist, None)?;
            let mut unimodal = BTreeMap::new();
            for (id, layer) in &model.unimodal {
                unimodal.insert(id.clone(), layer_posterior(layer, state.unimodal[id].view())?);
            }
            Ok(FramePosterior {
                decision: decide_frame(bundle, &model.fusion, &state.hidden, ctx)?,
                unimodal,
            })
        }
    }
}

/// Decision for one task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskDecision {
    pub task: String,
    pub label: usize,
    pub label_name: String,
    pub probability: f64,
    pub posterior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceClassification {
    pub sequence_id: String,
    pub decisions: Vec<TaskDecision>,
    /// Per-modality decisions of a fusion model.
    pub unimodal: BTreeMap<String, Vec<TaskDecision>>,
    pub timeline: PosteriorTimeline,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassifyOptions {
    /// Reject input whose standardized mean |z| exceeds this.
    pub unit_tolerance: Option<f64>,
}

/// Mean of a posterior timeline over frames.
pub fn aggregate(timeline: ArrayView2<f64>) -> Array1<f64> {
    timeline.mean_axis(Axis(0)).expect("non-empty timeline")
}

fn decisions(tasks: &[TaskSpec], timelines: &BTreeMap<String, Array2<f64>>) -> Vec<TaskDecision> {
    tasks
        .iter()
        .filter_map(|t| timelines.get(&t.name).map(|tl| (t, tl)))
        .map(|(t, tl)| {
            let p = aggregate(tl.view());
            let label = argmax(p.view());
            TaskDecision {
                task: t.name.clone(),
                label,
                label_name: t.class_name(label),
                probability: p[label],
                posterior: p.to_vec(),
            }
        })
        .collect()
}

/// Classifies a sequence given in input units.
pub fn classify_sequence(
    bundle: &ModelBundle,
    seq: &MultimodalSequence,
    options: ClassifyOptions,
) -> Result<SequenceClassification> {
    let parts = standardize_parts(bundle, seq, options.unit_tolerance)?;
    classify_standardized(bundle, &seq.id, &parts)
}

pub(crate) fn classify_standardized(
    bundle: &ModelBundle,
    id: &str,
    parts: &BTreeMap<String, Array2<f64>>,
) -> Result<SequenceClassification> {
    let timeline = posterior_timeline(bundle, parts)?;
    let unimodal = timeline
        .unimodal
        .iter()
        .map(|(m, tl)| (m.clone(), decisions(&bundle.tasks, tl)))
        .collect();
    Ok(SequenceClassification {
        sequence_id: id.to_string(),
        decisions: decisions(&bundle.tasks, &timeline.decision),
        unimodal,
        timeline,
    })
}

/// One JSON-lines record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationRecord {
    pub sequence_id: String,
    pub task: String,
    pub label: String,
    pub probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeline_path: Option<String>,
}

impl SequenceClassification {
    pub fn records(&self, timeline_path: Option<&str>) -> Vec<ClassificationRecord> {
        self.decisions
            .iter()
            .map(|d| ClassificationRecord {
                sequence_id: self.sequence_id.clone(),
                task: d.task.clone(),
                label: d.label_name.clone(),
                probability: d.probability,
                timeline_path: timeline_path.map(str::to_string),
            })
            .collect()
    }

    /// Per-frame decision posteriors as CSV: `frame,<task>:<class>,...`.
    pub fn timeline_csv(&self, tasks: &[TaskSpec]) -> String {
        let mut header = vec!["frame".to_string()];
        let mut cols = Vec::new();
        for t in tasks {
            if let Some(tl) = self.timeline.decision.get(&t.name) {
                for k in 0..t.class_count {
                    header.push(format!("{}:{}", t.name, t.class_name(k)));
                }
                cols.push(tl);
            }
        }
        let frames = cols.first().map_or(0, |c| c.nrows());
        let mut out = header.join(",") + "\n";
        for i in 0..frames {
            let mut row = vec![i.to_string()];
            for c in &cols {
                row.extend(c.row(i).iter().map(|p| format!("{p}")));
            }
            out += &row.join(",");
            out.push('\n');
        }
        out
    }
}

/// Accuracy and confusion matrices at sequence and frame level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub kind: String,
    pub tasks: Vec<TaskSpec>,
    pub sequence_level: BTreeMap<String, TaskMetrics>,
    pub frame_level: BTreeMap<String, TaskMetrics>,
    /// Sequence-level accuracy of each modality's own heads (fusion models).
    pub unimodal_sequence_level: BTreeMap<String, BTreeMap<String, TaskMetrics>>,
    pub sequence_count: usize,
}

impl Evaluation {
    pub fn mean_sequence_accuracy(&self) -> f64 {
        if self.sequence_level.is_empty() {
            return 0.0;
        }
        self.sequence_level.values().map(|m| m.accuracy).sum::<f64>() / self.sequence_level.len() as f64
    }

    /// Accuracy table: one row per level, one column per task, then the average.
    pub fn accuracy_table_csv(&self) -> String {
        let mut out = String::from("model,level");
        for t in &self.tasks {
            out += &format!(",{}", t.name);
        }
        out += ",average\n";
        let mut rows = vec![("sequence".to_string(), &self.sequence_level), ("frame".to_string(), &self.frame_level)];
        let uni: Vec<(String, &BTreeMap<String, TaskMetrics>)> = self
            .unimodal_sequence_level
            .iter()
            .map(|(m, v)| (format!("sequence[{m}]"), v))
            .collect();
        rows.extend(uni);
        for (level, table) in rows {
            out += &format!("{},{}", self.kind, level);
            let mut sum = 0.0;
            for t in &self.tasks {
                let acc = table.get(&t.name).map_or(0.0, |m| m.accuracy);
                sum += acc;
                out += &format!(",{acc:.6}");
            }
            out += &format!(",{:.6}\n", sum / self.tasks.len().max(1) as f64);
        }
        out
    }

    /// Sequence-level confusion matrices: `task,truth,<predicted classes...>`.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::new();
        for t in &self.tasks {
            let Some(m) = self.sequence_level.get(&t.name) else { continue };
            out += "task,truth";
            for k in 0..t.class_count {
                out += &format!(",{}", t.class_name(k));
            }
            out.push('\n');
            for (k, row) in m.confusion.iter().enumerate() {
                out += &format!("{},{}", t.name, t.class_name(k));
                for c in row {
                    out += &format!(",{c}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Evaluates a model on a labelled dataset. Sequences are classified in
/// parallel; results are combined in dataset order.
pub fn evaluate(bundle: &ModelBundle, dataset: &Dataset, options: ClassifyOptions) -> Result<Evaluation> {
    let results: Vec<SequenceClassification> = dataset
        .sequences
        .par_iter()
        .map(|s| classify_sequence(bundle, s, options))
        .collect::<Result<_>>()?;
    evaluation_from(bundle, dataset, &results)
}

pub(crate) fn evaluation_from(
    bundle: &ModelBundle,
    dataset: &Dataset,
    results: &[SequenceClassification],
) -> Result<Evaluation> {
    let mut sequence_level = BTreeMap::new();
    let mut frame_level = BTreeMap::new();
    let mut unimodal_sequence_level: BTreeMap<String, BTreeMap<String, TaskMetrics>> = BTreeMap::new();
    for t in &bundle.tasks {
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        let mut frame_truth = Vec::new();
        let mut frame_pred = Vec::new();
        let mut uni: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (seq, r) in dataset.sequences.iter().zip(results) {
            let label = *seq.labels.get(&t.name).ok_or_else(|| Error::MissingLabel(t.name.clone()))?;
            t.check_class(label)?;
            truth.push(label);
            if let Some(d) = r.decisions.iter().find(|d| d.task == t.name) {
                pred.push(d.label);
            }
            if let Some(tl) = r.timeline.decision.get(&t.name) {
                for row in tl.rows() {
                    frame_truth.push(label);
                    frame_pred.push(argmax(row));
                }
            }
            for (m, ds) in &r.unimodal {
                if let Some(d) = ds.iter().find(|d| d.task == t.name) {
                    uni.entry(m).or_default().push(d.label);
                }
            }
        }
        sequence_level.insert(t.name.clone(), metrics(&pred, &truth, t.class_count)?);
        frame_level.insert(t.name.clone(), metrics(&frame_pred, &frame_truth, t.class_count)?);
        for (m, p) in uni {
            unimodal_sequence_level
                .entry(m.to_string())
                .or_default()
                .insert(t.name.clone(), metrics(&p, &truth, t.class_count)?);
        }
    }
    Ok(Evaluation {
        kind: bundle.kind.to_string(),
        tasks: bundle.tasks.clone(),
        sequence_level,
        frame_level,
        unimodal_sequence_level,
        sequence_count: dataset.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{new_model, FrameSequence, ModelConfig, ModelKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tasks() -> Vec<TaskSpec> {
        vec![TaskSpec::new("AC", 3).unwrap(), TaskSpec::new("AF", 2).unwrap()]
    }

    fn bundle(kind: ModelKind, n: usize, seed: u64) -> ModelBundle {
        let mods: Vec<(String, usize)> = if kind.is_multimodal() {
            vec![("a".into(), 3), ("b".into(), 2)]
        } else {
            vec![("a".into(), 3)]
        };
        let cfg = ModelConfig::new(kind, mods, 4, n, tasks());
        let mut b = new_model(&cfg, seed).unwrap();
        // scale weights up so the posteriors are far from uniform
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scale = |l: &mut CrbmLayerParams| {
            l.weights.mapv_inplace(|x| x * 100.0 + rng.random_range(-0.1..0.1));
            l.hidden_ar.mapv_inplace(|x| x * 50.0);
            for h in &mut l.heads {
                h.weights.mapv_inplace(|x| x * 200.0);
            }
        };
        match &mut b.layers {
            Layers::Single { layer, .. } => scale(layer),
            Layers::Fused(f) => {
                for l in f.unimodal.values_mut() {
                    scale(l);
                }
                scale(&mut f.fusion);
            }
        }
        for d in b.deep_heads.values_mut() {
            scale(d);
        }
        b
    }

    fn sequence(b: &ModelBundle, len: usize, seed: u64) -> MultimodalSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = BTreeMap::from([("AC".to_string(), 1), ("AF".to_string(), 0)]);
        let mut parts = BTreeMap::new();
        for id in b.modality_ids() {
            let d = b.normalization[id].dim();
            let frames = Array2::from_shape_fn((len, d), |_| rng.random_range(-1.5..1.5));
            parts.insert(id.to_string(), FrameSequence::new(id, frames, labels.clone(), "s0").unwrap());
        }
        MultimodalSequence::new("q", "s0", parts, labels).unwrap()
    }

    #[test]
    fn frame_and_timeline_paths_agree_for_every_kind() {
        for kind in [ModelKind::Mtcrbm, ModelKind::Dcrbm, ModelKind::MtcrbmDeep, ModelKind::Mtmcrbm, ModelKind::MtmcrbmDeep] {
            let b = bundle(kind, 2, 3);
            let seq = sequence(&b, 5, 4);
            let parts = standardize_parts(&b, &seq, None).unwrap();
            let tl = posterior_timeline(&b, &parts).unwrap();
            for t in 0..5 {
                let ctx = FrameContext::at(&b, &parts, t).unwrap();
                let frames = parts.iter().map(|(k, v)| (k.clone(), v.row(t).to_owned())).collect();
                let fp = classify_frame(&b, &frames, &ctx).unwrap();
                fp.decision.validate().unwrap();
                for (task, p) in &fp.decision.0 {
                    let row = tl.decision[task].row(t);
                    for (a, b) in p.iter().zip(row) {
                        assert!((a - b).abs() < 1e-12, "{kind} {task} t={t}");
                    }
                }
                for (m, post) in &fp.unimodal {
                    for (task, p) in &post.0 {
                        let row = tl.unimodal[m][task].row(t);
                        for (a, b) in p.iter().zip(row) {
                            assert!((a - b).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_weight_model_is_uniform() {
        let cfg = ModelConfig::new(ModelKind::Mtcrbm, vec![("a".to_string(), 3)], 4, 1, tasks());
        let mut b = new_model(&cfg, 0).unwrap();
        if let Layers::Single { layer, .. } = &mut b.layers {
            layer.weights.fill(0.0);
            for h in &mut layer.heads {
                h.weights.fill(0.0);
            }
        }
        let c = classify_sequence(&b, &sequence(&b, 4, 1), ClassifyOptions::default()).unwrap();
        assert!((c.decisions[0].posterior[0] - 1.0 / 3.0).abs() < 1e-15);
        // ties break toward the lowest index
        assert_eq!(c.decisions[0].label, 0);
    }

    #[test]
    fn dominant_label_column_wins() {
        let cfg = ModelConfig::new(ModelKind::Mtcrbm, vec![("a".to_string(), 3)], 4, 1, tasks());
        let mut b = new_model(&cfg, 0).unwrap();
        if let Layers::Single { layer, .. } = &mut b.layers {
            layer.heads[0].weights.column_mut(2).fill(50.0);
        }
        for seed in 0..5 {
            let c = classify_sequence(&b, &sequence(&b, 3, seed), ClassifyOptions::default()).unwrap();
            assert_eq!(c.decisions[0].label, 2);
        }
    }

    #[test]
    fn length_one_sequence_equals_frame() {
        let b = bundle(ModelKind::Mtcrbm, 2, 1);
        let seq = sequence(&b, 1, 2);
        let c = classify_sequence(&b, &seq, ClassifyOptions::default()).unwrap();
        let parts = standardize_parts(&b, &seq, None).unwrap();
        let frames = parts.iter().map(|(k, v)| (k.clone(), v.row(0).to_owned())).collect();
        let fp = classify_frame(&b, &frames, &FrameContext::start(&b)).unwrap();
        for d in &c.decisions {
            assert_eq!(d.posterior, fp.decision.0[&d.task]);
        }
    }

    #[test]
    fn frame_order_is_irrelevant_without_history() {
        let b = bundle(ModelKind::Mtcrbm, 0, 2);
        let seq = sequence(&b, 6, 3);
        let mut rev = seq.clone();
        for p in rev.parts.values_mut() {
            p.frames.invert_axis(Axis(0));
        }
        let a = classify_sequence(&b, &seq, ClassifyOptions::default()).unwrap();
        let r = classify_sequence(&b, &rev, ClassifyOptions::default()).unwrap();
        for (x, y) in a.decisions.iter().zip(&r.decisions) {
            for (p, q) in x.posterior.iter().zip(&y.posterior) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn raw_units_are_flagged() {
        let b = bundle(ModelKind::Mtcrbm, 1, 1);
        let mut seq = sequence(&b, 4, 1);
        for p in seq.parts.values_mut() {
            p.frames.mapv_inplace(|x| x * 1000.0);
        }
        let opts = ClassifyOptions { unit_tolerance: Some(10.0) };
        assert!(matches!(classify_sequence(&b, &seq, opts), Err(Error::NotStandardized { .. })));
    }
}
