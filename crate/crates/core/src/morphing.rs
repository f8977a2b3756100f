//! Style morphing: regenerate a sequence frame by frame with some task labels
//! clamped to new classes, then measure how the classifier's view changes.
//!
//! At frame `t` the history window is `blend · original + (1 − blend) · generated`
//! over the preceding frames. The hidden means are computed from the original
//! frame `t`, that history and the clamped labels, and the frame is replaced by
//! the visible mean. Everything happens in the model's standardized units; the
//! result is mapped back to input units at the end.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::heads::head_label_vectors;
use crate::inference::{classify_sequence, ClassifyOptions, SequenceClassification};
use crate::layers::{dynamic_biases, hidden_mean, visible_mean, HistoryWindow};
use crate::model::{CrbmLayerParams, Dataset, FrameSequence, ModelBundle, ModelKind, MultimodalSequence, TaskSpec};

pub const DEFAULT_BLEND: f64 = 0.5;

fn morph_layer(bundle: &ModelBundle) -> Result<(&str, &CrbmLayerParams)> {
    match (bundle.kind, bundle.single_layer()) {
        (ModelKind::Mtcrbm | ModelKind::Dcrbm, Some(found)) => Ok(found),
        _ => Err(Error::Config(format!(
            "morphing needs an mtcrbm or dcrbm model, got {}",
            bundle.kind
        ))),
    }
}

fn check_blend(blend: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&blend) {
        return Err(Error::Config(format!("blend {blend} is outside [0, 1]")));
    }
    Ok(())
}

/// The one-pass morph on standardized frames, with one label vector per head.
pub fn morph_standardized(
    params: &CrbmLayerParams,
    frames: ArrayView2<f64>,
    labels: &[Array1<f64>],
    blend: f64,
) -> Result<Array2<f64>> {
    check_blend(blend)?;
    let order = params.history_order;
    let mut generated = Array2::zeros(frames.raw_dim());
    for t in 0..frames.nrows() {
        let original = HistoryWindow::from_frames(frames, t, order);
        let own = HistoryWindow::from_frames(generated.view(), t, order);
        let hist = original.blend(&own, blend)?;
        let (c, d) = dynamic_biases(params, &hist)?;
        let h = hidden_mean(params, frames.row(t), d.view(), Some(labels))?;
        let v = visible_mean(params, h.view(), c.view())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                block: format!("morphed frame {t}"),
            });
        }
        generated.row_mut(t).assign(&v);
    }
    Ok(generated)
}

/// Complete label assignment for a morph: the targets, then the sequence's own
/// labels, then the classifier's decision for any task still missing.
pub fn resolve_labels(
    bundle: &ModelBundle,
    seq: &MultimodalSequence,
    targets: &BTreeMap<String, usize>,
) -> Result<BTreeMap<String, usize>> {
    for (task, &class) in targets {
        bundle.task(task)?.check_class(class)?;
    }
    let mut labels = targets.clone();
    let mut decided: Option<SequenceClassification> = None;
    for task in &bundle.tasks {
        if labels.contains_key(&task.name) {
            continue;
        }
        let class = match seq.labels.get(&task.name) {
            Some(&k) => k,
            None => {
                if decided.is_none() {
                    decided = Some(classify_sequence(bundle, seq, ClassifyOptions::default())?);
                }
                decided
                    .as_ref()
                    .and_then(|c| c.decisions.iter().find(|d| d.task == task.name))
                    .map(|d| d.label)
                    .ok_or_else(|| Error::MissingLabel(task.name.clone()))?
            }
        };
        labels.insert(task.name.clone(), class);
    }
    Ok(labels)
}

/// Morphs `seq` toward `targets` (task → class). The result is in input units,
/// has the same length and dimension, and carries the labels used.
pub fn morph_sequence(
    bundle: &ModelBundle,
    seq: &MultimodalSequence,
    targets: &BTreeMap<String, usize>,
    blend: f64,
) -> Result<FrameSequence> {
    check_blend(blend)?;
    let (modality, layer) = morph_layer(bundle)?;
    let labels = resolve_labels(bundle, seq, targets)?;
    let head_labels = match bundle.flat_labeling() {
        Some(flat) => BTreeMap::from([(flat.product_task().name, flat.encode(&labels)?)]),
        None => labels.clone(),
    };
    let vectors = head_label_vectors(layer, &head_labels)?;
    let part = seq.part(modality)?;
    let norm = &bundle.normalization[modality];
    let z = norm.apply(part.frames.view())?;
    let morphed = morph_standardized(layer, z.view(), &vectors, blend)?;
    FrameSequence::new(modality, norm.invert(morphed.view())?, labels, &part.source_id)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorphEvalConfig {
    /// Task whose class is being changed (the affect).
    pub style_task: String,
    /// Task that indexes the table rows and is held fixed (the action).
    pub group_task: String,
    /// Sequences of this style class are morphed.
    pub source_class: usize,
    /// Classes to morph toward. Including `source_class` gives the null-morph control.
    pub target_classes: Vec<usize>,
    pub blend: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorphCell {
    pub group: usize,
    pub target: usize,
    /// Source sequences in this row.
    pub count: usize,
    /// Mean classifier probability of the target class; `None` for an empty cell.
    pub before: Option<f64>,
    pub after: Option<f64>,
}

impl MorphCell {
    pub fn delta(&self) -> Option<f64> {
        Some(self.after? - self.before?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorphTable {
    pub group_task: TaskSpec,
    pub style_task: TaskSpec,
    pub source_class: usize,
    pub target_classes: Vec<usize>,
    /// Row-major over group classes, then targets.
    pub cells: Vec<MorphCell>,
}

impl MorphTable {
    pub fn cell(&self, group: usize, target: usize) -> Option<&MorphCell> {
        self.cells.iter().find(|c| c.group == group && c.target == target)
    }

    /// Non-empty cells with a target other than the source, and how many of them rose.
    pub fn raised(&self) -> (usize, usize) {
        let cells: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.target != self.source_class)
            .filter_map(MorphCell::delta)
            .collect();
        (cells.iter().filter(|&&d| d > 0.0).count(), cells.len())
    }

    /// Largest |after − before| over the null-morph cells, if any were evaluated.
    pub fn null_delta(&self) -> Option<f64> {
        self.cells
            .iter()
            .filter(|c| c.target == self.source_class)
            .filter_map(MorphCell::delta)
            .map(f64::abs)
            .reduce(f64::max)
    }

    /// One row per group class, two columns (`<Target>-Before`, `<Target>-After`)
    /// per target. Empty cells read `NA`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.group_task.name.clone()];
        for &t in &self.target_classes {
            let name = self.style_task.class_name(t);
            header.push(format!("{name}-Before"));
            header.push(format!("{name}-After"));
        }
        w.write_record(&header).expect("in-memory write");
        let fmt = |p: Option<f64>| p.map_or_else(|| "NA".to_string(), |p| format!("{p:.4}"));
        for g in 0..self.group_task.class_count {
            let mut row = vec![self.group_task.class_name(g)];
            for &t in &self.target_classes {
                let cell = self.cell(g, t);
                row.push(fmt(cell.and_then(|c| c.before)));
                row.push(fmt(cell.and_then(|c| c.after)));
            }
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

fn class_probability(bundle: &ModelBundle, seq: &MultimodalSequence, task: &str, class: usize) -> Result<f64> {
    let c = classify_sequence(bundle, seq, ClassifyOptions::default())?;
    c.decisions
        .iter()
        .find(|d| d.task == task)
        .map(|d| d.posterior[class])
        .ok_or_else(|| Error::UnknownTask(task.to_string()))
}

/// Morphs every sequence of the source style toward each target style and
/// tabulates the mean target-class probability before and after, per group.
pub fn morph_eval(bundle: &ModelBundle, dataset: &Dataset, config: &MorphEvalConfig) -> Result<MorphTable> {
    morph_layer(bundle)?;
    check_blend(config.blend)?;
    let style = bundle.task(&config.style_task)?.clone();
    let group = bundle.task(&config.group_task)?.clone();
    if style.name == group.name {
        return Err(Error::Config("style and group tasks must differ".into()));
    }
    style.check_class(config.source_class)?;
    for &t in &config.target_classes {
        style.check_class(t)?;
    }
    let sources: Vec<&MultimodalSequence> = dataset
        .sequences
        .iter()
        .filter(|s| s.labels.get(&style.name) == Some(&config.source_class))
        .collect();
    for s in &sources {
        if !s.labels.contains_key(&group.name) {
            return Err(Error::Data(format!("sequence `{}` has no `{}` label", s.id, group.name)));
        }
    }

    // (group, [(before, after)] per target) for each source sequence
    let rows: Vec<(usize, Vec<(f64, f64)>)> = sources
        .par_iter()
        .map(|seq| {
            let mut pairs = Vec::with_capacity(config.target_classes.len());
            for &target in &config.target_classes {
                let before = class_probability(bundle, seq, &style.name, target)?;
                let targets = BTreeMap::from([(style.name.clone(), target)]);
                let part = morph_sequence(bundle, seq, &targets, config.blend)?;
                let morphed = MultimodalSequence::single(seq.id.clone(), part)?;
                let after = class_probability(bundle, &morphed, &style.name, target)?;
                pairs.push((before, after));
            }
            Ok((seq.labels[&group.name], pairs))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for g in 0..group.class_count {
        let members: Vec<&Vec<(f64, f64)>> = rows.iter().filter(|(k, _)| *k == g).map(|(_, p)| p).collect();
        for (ti, &target) in config.target_classes.iter().enumerate() {
            let n = members.len();
            let mean = |pick: fn(&(f64, f64)) -> f64| {
                (n > 0).then(|| members.iter().map(|p| pick(&p[ti])).sum::<f64>() / n as f64)
            };
            cells.push(MorphCell {
                group: g,
                target,
                count: n,
                before: mean(|p| p.0),
                after: mean(|p| p.1),
            });
        }
    }
    Ok(MorphTable {
        group_task: group,
        style_task: style,
        source_class: config.source_class,
        target_classes: config.target_classes.clone(),
        cells,
    })
}
