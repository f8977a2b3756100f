//! Multimodal model: one conditional layer per modality joined by a fusion layer.
//!
//! The fusion input `x` is the concatenation of the unimodal hidden units in
//! modality-id order. With fusion bias `e`, fusion history matrix `C` over the
//! previous concatenated unimodal hidden means, and coupling weights `W`:
//!
//! ```text
//! f = e + Cᵀ·hist
//! p(h_n = 1 | x, y, hist) = σ(f_n + Σ_l Σ_k y^l_k u^l_nk + Σ_r x_r w_rn)
//! E_MTM = Σ_m E_MT^m − f·h − xᵀWh − Σ_l s^l·y^l − Σ_l hᵀU^l y^l
//! ```
//!
//! The fusion layer reuses the single-layer kernels, so a one-modality fusion
//! model and a stacked two-layer model with the same parameters compute
//! identical hidden means.

use std::collections::BTreeMap;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::heads::{energy_mtcrbm, head_label_vectors};
use crate::layers::{dynamic_biases, hidden_input, hidden_mean, hidden_mean_sequence, HistoryWindow};
use crate::math::sigmoid;
use crate::model::{CrbmLayerParams, FusionModel};

/// Hidden activity of a fusion model at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionState {
    pub unimodal: BTreeMap<String, Array1<f64>>,
    /// Concatenated unimodal hidden means in modality-id order.
    pub input: Array1<f64>,
    pub hidden: Array1<f64>,
}

/// Fusion dynamic bias `f`.
pub fn fusion_dynamic_bias(model: &FusionModel, fusion_hist: &HistoryWindow) -> Result<Array1<f64>> {
    Ok(dynamic_biases(&model.fusion, fusion_hist)?.1)
}

fn labels_for(
    layer: &CrbmLayerParams,
    labels: Option<&BTreeMap<String, usize>>,
) -> Result<Option<Vec<Array1<f64>>>> {
    match labels {
        Some(l) if !layer.heads.is_empty() => Ok(Some(head_label_vectors(layer, l)?)),
        _ => Ok(None),
    }
}

fn any_heads(model: &FusionModel) -> bool {
    !model.fusion.heads.is_empty() || model.unimodal.values().any(|l| !l.heads.is_empty())
}

pub(crate) fn part<'a, T>(map: &'a BTreeMap<String, T>, id: &str) -> Result<&'a T> {
    map.get(id).ok_or_else(|| Error::MissingModality(id.to_string()))
}

/// Bottom-up pass for one frame. Label terms enter every layer that carries
/// heads when `labels` is given.
pub fn fusion_forward(
    model: &FusionModel,
    frames: &BTreeMap<String, Array1<f64>>,
    histories: &BTreeMap<String, HistoryWindow>,
    fusion_hist: &HistoryWindow,
    labels: Option<&BTreeMap<String, usize>>,
) -> Result<FusionState> {
    if labels.is_some() && !any_heads(model) {
        return Err(Error::UnexpectedLabels);
    }
    let mut unimodal = BTreeMap::new();
    for (id, layer) in &model.unimodal {
        let v = part(frames, id)?;
        let hist = part(histories, id)?;
        let (_, d) = dynamic_biases(layer, hist)?;
        let ys = labels_for(layer, labels)?;
        let h = hidden_mean(layer, v.view(), d.view(), ys.as_deref())?;
        unimodal.insert(id.clone(), h);
    }
    let views: Vec<ArrayView1<f64>> = unimodal.values().map(|h| h.view()).collect();
    let input = concatenate(Axis(0), &views).expect("1-d concatenation");
    let f = fusion_dynamic_bias(model, fusion_hist)?;
    let ys = labels_for(&model.fusion, labels)?;
    let hidden = hidden_mean(&model.fusion, input.view(), f.view(), ys.as_deref())?;
    Ok(FusionState {
        unimodal,
        input,
        hidden,
    })
}

/// Full conditional of modality `id`'s hidden units given its frame, history,
/// the fusion hidden state, and the labels:
/// `σ(d^m + W^mᵀv + Σ_l U^{m,l} y^l + W_block·h_fusion)`.
pub fn unimodal_conditional(
    model: &FusionModel,
    id: &str,
    v: ArrayView1<f64>,
    hist: &HistoryWindow,
    fusion_hidden: ArrayView1<f64>,
    labels: Option<&BTreeMap<String, usize>>,
) -> Result<Array1<f64>> {
    let layer = part(&model.unimodal, id)?;
    if fusion_hidden.len() != model.fusion.hidden_dim {
        return Err(Error::shape("fusion hidden vector", model.fusion.hidden_dim, fusion_hidden.len()));
    }
    let (start, end) = model.offsets()[id];
    let (_, d) = dynamic_biases(layer, hist)?;
    let ys = labels_for(layer, labels)?;
    let mut act = hidden_input(layer, v, d.view(), ys.as_deref())?;
    act += &model.fusion.weights.slice(s![start..end, ..]).dot(&fusion_hidden);
    act.mapv_inplace(sigmoid);
    Ok(act)
}

/// Energy of a complete state assignment. `labels` holds one one-hot vector per
/// task; it is applied to every layer that carries heads.
#[allow(clippy::too_many_arguments)]
pub fn energy_mtmcrbm(
    model: &FusionModel,
    visibles: &BTreeMap<String, Array1<f64>>,
    unimodal_hidden: &BTreeMap<String, Array1<f64>>,
    fusion_hidden: ArrayView1<f64>,
    labels: &[Array1<f64>],
    histories: &BTreeMap<String, HistoryWindow>,
    fusion_hist: &HistoryWindow,
) -> Result<f64> {
    let pick = |layer: &CrbmLayerParams| if layer.heads.is_empty() { &[][..] } else { labels };
    let mut e = 0.0;
    for (id, layer) in &model.unimodal {
        e += energy_mtcrbm(
            layer,
            part(visibles, id)?.view(),
            part(unimodal_hidden, id)?.view(),
            pick(layer),
            part(histories, id)?,
        )?;
    }
    let views: Vec<ArrayView1<f64>> = unimodal_hidden.values().map(|h| h.view()).collect();
    let input = concatenate(Axis(0), &views).expect("1-d concatenation");
    // fusion visible bias and history terms are zero, so the fusion layer's own
    // energy is exactly −f·h − xᵀWh plus its label terms
    e += energy_mtcrbm(&model.fusion, input.view(), fusion_hidden, pick(&model.fusion), fusion_hist)?;
    Ok(e)
}

/// Per-modality hidden timelines, the concatenated fusion input, and the
/// fusion hidden timeline.
pub type FusionTimelines = (BTreeMap<String, Array2<f64>>, Array2<f64>, Array2<f64>);

/// Label-free hidden means of a whole multimodal sequence.
pub fn fusion_timeline(model: &FusionModel, parts: &BTreeMap<String, ArrayView2<f64>>) -> Result<FusionTimelines> {
    let mut unimodal = BTreeMap::new();
    for (id, layer) in &model.unimodal {
        let frames = part(parts, id)?;
        if frames.ncols() != layer.visible_dim {
            return Err(Error::shape(format!("frames of modality `{id}`"), layer.visible_dim, frames.ncols()));
        }
        unimodal.insert(id.clone(), hidden_mean_sequence(layer, *frames));
    }
    let input = concat_columns(unimodal.values());
    let hidden = hidden_mean_sequence(&model.fusion, input.view());
    Ok((unimodal, input, hidden))
}

pub(crate) fn concat_columns<'a>(blocks: impl IntoIterator<Item = &'a Array2<f64>>) -> Array2<f64> {
    let views: Vec<ArrayView2<f64>> = blocks.into_iter().map(|b| b.view()).collect();
    concatenate(Axis(1), &views).expect("equal row counts")
}
