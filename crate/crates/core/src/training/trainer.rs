//! The training loop: standardization, shuffled frame windows, CD updates,
//! and the two-stage schedule of the deep kinds.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::gradient::{cd_step_fusion, cd_step_layer, FusionBatch, LayerBatch, LayerGradient};
use super::optimizer::apply_update;
use super::report::{EpochReport, TrainReport};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::fusion::fusion_timeline;
use crate::heads::label_posterior_batch;
use crate::inference::{aggregate, classify_standardized};
use crate::layers::{hidden_mean_sequence, history_row_into};
use crate::math::argmax;
use crate::model::{
    init_heads, CrbmLayerParams, Dataset, FusionModel, Layers, ModelBundle, ModelKind, TaskSpec,
};
use crate::normalize::Normalization;

/// A standardized training sequence. `labels` holds every task plus, for
/// flattened models, the product label.
#[derive(Debug, Clone)]
pub(crate) struct TrainSeq {
    pub parts: BTreeMap<String, Array2<f64>>,
    pub labels: BTreeMap<String, usize>,
}

/// What one stage updates.
enum Stack {
    Layer {
        name: String,
        part: String,
        params: CrbmLayerParams,
    },
    Fusion(FusionModel),
}

impl Stack {
    fn layers(&self) -> Vec<(String, &CrbmLayerParams)> {
        match self {
            Stack::Layer { name, params, .. } => vec![(name.clone(), params)],
            Stack::Fusion(f) => {
                let mut out: Vec<_> = f.unimodal.iter().map(|(id, l)| (format!("unimodal[{id}]"), l)).collect();
                out.push(("fusion".into(), &f.fusion));
                out
            }
        }
    }

    fn layer_mut(&mut self, key: &str) -> &mut CrbmLayerParams {
        match self {
            Stack::Layer { params, .. } => params,
            Stack::Fusion(f) => {
                if key == "fusion" {
                    &mut f.fusion
                } else {
                    let id = key.trim_start_matches("unimodal[").trim_end_matches(']');
                    f.unimodal.get_mut(id).expect("known modality")
                }
            }
        }
    }
}

/// Trains `model` on `dataset`. Returns the trained model and a per-epoch report.
pub fn train(model: ModelBundle, dataset: &Dataset, config: &TrainConfig) -> Result<(ModelBundle, TrainReport)> {
    config.validate()?;
    let started = Instant::now();
    if dataset.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    let mut model = model;
    model.validate()?;
    for seq in &dataset.sequences {
        for id in model.modality_ids() {
            let frames = &seq.part(id)?.frames;
            let dim = model.normalization[id].dim();
            if frames.ncols() != dim {
                return Err(Error::shape(format!("sequence `{}` modality `{id}`", seq.id), dim, frames.ncols()));
            }
        }
        crate::model::validate_labels(&seq.labels, &model.tasks)
            .map_err(|e| Error::Data(format!("sequence `{}`: {e}", seq.id)))?;
        if let Some(t) = model.tasks.iter().find(|t| !seq.labels.contains_key(&t.name)) {
            return Err(Error::MissingLabel(format!("{} (sequence `{}`)", t.name, seq.id)));
        }
    }

    if config.auto_standardize {
        let ids: Vec<String> = model.modality_ids().iter().map(|s| s.to_string()).collect();
        for id in ids {
            let blocks = dataset.sequences.iter().map(|s| s.parts[&id].frames.view());
            model.normalization.insert(id.clone(), Normalization::fit(blocks)?);
        }
    }
    let flat = model.flat_labeling();
    let seqs: Vec<TrainSeq> = dataset
        .sequences
        .iter()
        .map(|s| {
            let mut parts = BTreeMap::new();
            for id in model.modality_ids() {
                parts.insert(id.to_string(), model.normalization[id].apply(s.parts[id].frames.view())?);
            }
            let mut labels = s.labels.clone();
            if let Some(flat) = &flat {
                labels.insert(flat.product_task().name, flat.encode(&s.labels)?);
            }
            Ok(TrainSeq { parts, labels })
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut epochs = Vec::new();
    let tasks = model.tasks.clone();

    match model.kind {
        ModelKind::Crbm | ModelKind::Dcrbm | ModelKind::Mtcrbm | ModelKind::Mtmcrbm => {
            let template = model.clone();
            let mut stack = stack_of(&model.layers);
            let acc = |s: &Stack| bundle_accuracy(&with_stack(&template, s), &seqs);
            run_stage(&mut stack, &seqs, config, &mut rng, "joint", &mut epochs, &acc)?;
            model.layers = layers_of(stack);
        }
        ModelKind::MtcrbmDeep | ModelKind::MtmcrbmDeep => {
            // stage 1: the shared layer learns with temporary heads, which are then dropped
            let mut template = model.clone();
            template.deep_heads.clear();
            let mut stack = stack_of(&model.layers);
            match &mut stack {
                Stack::Layer { params, .. } => {
                    template.kind = ModelKind::Mtcrbm;
                    params.heads = init_heads(&tasks, params.hidden_dim, &mut rng);
                }
                Stack::Fusion(f) => {
                    template.kind = ModelKind::Mtmcrbm;
                    f.fusion.heads = init_heads(&tasks, f.fusion.hidden_dim, &mut rng);
                }
            }
            let acc = |s: &Stack| bundle_accuracy(&with_stack(&template, s), &seqs);
            run_stage(&mut stack, &seqs, config, &mut rng, "shared", &mut epochs, &acc)?;
            match &mut stack {
                Stack::Layer { params, .. } => params.heads.clear(),
                Stack::Fusion(f) => f.fusion.heads.clear(),
            }
            model.layers = layers_of(stack);

            // stage 2: each task layer learns on the frozen top hidden means
            let top: Vec<TrainSeq> = seqs
                .par_iter()
                .map(|s| {
                    let timeline = top_timeline(&model.layers, &s.parts)?;
                    Ok(TrainSeq {
                        parts: BTreeMap::from([("top".to_string(), timeline)]),
                        labels: s.labels.clone(),
                    })
                })
                .collect::<Result<_>>()?;
            let names: Vec<String> = model.deep_heads.keys().cloned().collect();
            for task in names {
                let params = model.deep_heads.remove(&task).expect("deep head");
                let mut stack = Stack::Layer {
                    name: format!("deep[{task}]"),
                    part: "top".into(),
                    params,
                };
                let acc = |s: &Stack| deep_accuracy(s, &top);
                run_stage(&mut stack, &top, config, &mut rng, &format!("deep[{task}]"), &mut epochs, &acc)?;
                let Stack::Layer { params, .. } = stack else { unreachable!() };
                model.deep_heads.insert(task, params);
            }
        }
    }
    model.validate()?;
    let report = TrainReport {
        kind: model.kind.to_string(),
        config: config.clone(),
        epochs,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

fn stack_of(layers: &Layers) -> Stack {
    match layers {
        Layers::Single { modality, layer } => Stack::Layer {
            name: format!("unimodal[{modality}]"),
            part: modality.clone(),
            params: layer.clone(),
        },
        Layers::Fused(f) => Stack::Fusion(f.clone()),
    }
}

fn layers_of(stack: Stack) -> Layers {
    match stack {
        Stack::Layer { part, params, .. } => Layers::Single {
            modality: part,
            layer: params,
        },
        Stack::Fusion(f) => Layers::Fused(f),
    }
}

fn with_stack(template: &ModelBundle, stack: &Stack) -> ModelBundle {
    let mut b = template.clone();
    b.layers = match stack {
        Stack::Layer { part, params, .. } => Layers::Single {
            modality: part.clone(),
            layer: params.clone(),
        },
        Stack::Fusion(f) => Layers::Fused(f.clone()),
    };
    b
}

/// Label-free hidden means of the topmost shared layer.
fn top_timeline(layers: &Layers, parts: &BTreeMap<String, Array2<f64>>) -> Result<Array2<f64>> {
    match layers {
        Layers::Single { modality, layer } => Ok(hidden_mean_sequence(layer, parts[modality].view())),
        Layers::Fused(f) => {
            let views = parts.iter().map(|(k, v)| (k.clone(), v.view())).collect();
            Ok(fusion_timeline(f, &views)?.2)
        }
    }
}

fn bundle_accuracy(bundle: &ModelBundle, seqs: &[TrainSeq]) -> Result<BTreeMap<String, f64>> {
    if bundle.tasks.is_empty() {
        return Ok(BTreeMap::new());
    }
    let hits: Vec<BTreeMap<String, bool>> = seqs
        .par_iter()
        .map(|s| {
            let c = classify_standardized(bundle, "", &s.parts)?;
            Ok(c.decisions.iter().map(|d| (d.task.clone(), s.labels.get(&d.task) == Some(&d.label))).collect())
        })
        .collect::<Result<_>>()?;
    Ok(fraction(&hits, seqs.len()))
}

fn deep_accuracy(stack: &Stack, seqs: &[TrainSeq]) -> Result<BTreeMap<String, f64>> {
    let Stack::Layer { params, part, .. } = stack else { unreachable!("deep heads are single layers") };
    let head = &params.heads[0];
    let hits: Vec<BTreeMap<String, bool>> = seqs
        .par_iter()
        .map(|s| {
            let h = hidden_mean_sequence(params, s.parts[part].view());
            let p = aggregate(label_posterior_batch(head, h.view()).view());
            BTreeMap::from([(head.task.name.clone(), s.labels.get(&head.task.name) == Some(&argmax(p.view())))])
        })
        .map(Ok)
        .collect::<Result<_>>()?;
    Ok(fraction(&hits, seqs.len()))
}

fn fraction(hits: &[BTreeMap<String, bool>], n: usize) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for h in hits {
        for (task, &ok) in h {
            *out.entry(task.clone()).or_default() += f64::from(u8::from(ok));
        }
    }
    out.values_mut().for_each(|v| *v /= n as f64);
    out
}

fn one_hot_rows(
    task: &TaskSpec,
    seqs: &[TrainSeq],
    windows: &[(usize, usize)],
) -> Result<Array2<f64>> {
    let mut y = Array2::zeros((windows.len(), task.class_count));
    for (r, &(s, _)) in windows.iter().enumerate() {
        let class = *seqs[s].labels.get(&task.name).ok_or_else(|| Error::MissingLabel(task.name.clone()))?;
        task.check_class(class)?;
        y[[r, class]] = 1.0;
    }
    Ok(y)
}

#[allow(clippy::too_many_arguments)]
fn run_stage(
    stack: &mut Stack,
    seqs: &[TrainSeq],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    stage: &str,
    report: &mut Vec<EpochReport>,
    accuracy: &dyn Fn(&Stack) -> Result<BTreeMap<String, f64>>,
) -> Result<()> {
    let mut windows: Vec<(usize, usize)> = seqs
        .iter()
        .enumerate()
        .flat_map(|(s, seq)| {
            let len = seq.parts.values().next().map_or(0, |p| p.nrows());
            (0..len).map(move |t| (s, t))
        })
        .collect();
    let mut velocity: BTreeMap<String, LayerGradient> = stack
        .layers()
        .into_iter()
        .map(|(k, l)| (k, LayerGradient::zeros_like(l)))
        .collect();

    for epoch in 1..=config.epochs {
        // fusion history: concatenated label-free unimodal hidden means under the current parameters
        let fusion_inputs: Vec<Array2<f64>> = match stack {
            Stack::Fusion(f) => seqs
                .par_iter()
                .map(|s| {
                    let views = s.parts.iter().map(|(k, v)| (k.clone(), v.view())).collect();
                    Ok(fusion_timeline(f, &views)?.1)
                })
                .collect::<Result<_>>()?,
            Stack::Layer { .. } => Vec::new(),
        };
        windows.shuffle(rng);
        let mut squared = 0.0;
        let mut entries = 0usize;
        let mut updates = 0usize;
        for chunk in windows.chunks(config.minibatch_size) {
            let outcome = match &*stack {
                Stack::Layer { name, part, params } => {
                    let (visible, history) = gather_layer(seqs, part, chunk, params);
                    let labels = params
                        .heads
                        .iter()
                        .map(|h| one_hot_rows(&h.task, seqs, chunk))
                        .collect::<Result<Vec<_>>>()?;
                    let batch = LayerBatch {
                        visible,
                        history,
                        labels,
                    };
                    cd_step_layer(params, name, &batch, config.cd_steps, rng)?
                }
                Stack::Fusion(f) => {
                    let mut visible = BTreeMap::new();
                    let mut history = BTreeMap::new();
                    for (id, l) in &f.unimodal {
                        let (v, h) = gather_layer(seqs, id, chunk, l);
                        visible.insert(id.clone(), v);
                        history.insert(id.clone(), h);
                    }
                    let mut fusion_history = Array2::zeros((chunk.len(), f.fusion.history_len()));
                    for (r, &(s, t)) in chunk.iter().enumerate() {
                        history_row_into(fusion_inputs[s].view(), t, f.fusion.history_order, fusion_history.row_mut(r));
                    }
                    let mut task_list = f.fusion.head_tasks();
                    if task_list.is_empty() {
                        task_list = f.unimodal.values().next().map(|l| l.head_tasks()).unwrap_or_default();
                    }
                    let labels = task_list
                        .iter()
                        .map(|t| Ok((t.name.clone(), one_hot_rows(t, seqs, chunk)?)))
                        .collect::<Result<BTreeMap<_, _>>>()?;
                    let batch = FusionBatch {
                        visible,
                        history,
                        fusion_history,
                        labels,
                    };
                    cd_step_fusion(f, &batch, config.cd_steps, rng)?
                }
            };
            for (key, grad) in &outcome.gradients.layers {
                let vel = velocity.get_mut(key).expect("velocity per layer");
                apply_update(stack.layer_mut(key), grad, vel, config);
            }
            squared += outcome.squared_error;
            entries += outcome.entries;
            updates += 1;
        }
        for (key, layer) in stack.layers() {
            layer.validate(&key)?;
        }
        let reconstruction_error = if entries == 0 { 0.0 } else { squared / entries as f64 };
        let train_accuracy = accuracy(stack)?;
        log::info!("{stage} epoch {epoch}: reconstruction error {reconstruction_error:.5}, accuracy {train_accuracy:?}");
        report.push(EpochReport {
            stage: stage.to_string(),
            epoch,
            reconstruction_error,
            train_accuracy,
            updates,
        });
    }
    Ok(())
}

fn gather_layer(
    seqs: &[TrainSeq],
    part: &str,
    windows: &[(usize, usize)],
    params: &CrbmLayerParams,
) -> (Array2<f64>, Array2<f64>) {
    let dim = params.visible_dim;
    let order = params.history_order;
    let mut v = Array2::zeros((windows.len(), dim));
    let mut hist = Array2::zeros((windows.len(), order * dim));
    for (r, &(s, t)) in windows.iter().enumerate() {
        let f = seqs[s].parts[part].view();
        v.row_mut(r).assign(&f.row(t));
        history_row_into(f, t, order, hist.row_mut(r));
    }
    (v, hist)
}
