//! Contrastive-divergence statistics and gradient containers.
//!
//! Every update is `⟨s⟩_data − ⟨s⟩_recon` where `s = −∂E/∂θ`:
//!
//! | block          | gaussian visibles      | binary visibles |
//! |----------------|------------------------|-----------------|
//! | visible_bias   | v − c                  | v               |
//! | hidden_bias    | h                      | h               |
//! | visible_ar     | u (v − c)ᵀ             | u vᵀ            |
//! | hidden_ar      | u hᵀ                   | u hᵀ            |
//! | weights        | v hᵀ                   | v hᵀ            |
//! | label_bias     | y                      | y               |
//! | head weights   | h yᵀ                   | h yᵀ            |
//!
//! Hidden statistics use conditional means rather than samples.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fusion::concat_columns;
use crate::heads::label_posterior_batch;
use crate::layers::{
    add_label_drive, dynamic_biases_batch, hidden_mean_batch, sample_hidden_batch, sample_visible_batch,
    visible_mean_batch,
};
use crate::math::sigmoid;
use crate::model::{CrbmLayerParams, FusionModel, VisibleKind};

/// One value per parameter of a [`CrbmLayerParams`], block for block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
    pub visible_ar: Array2<f64>,
    pub hidden_ar: Array2<f64>,
    pub weights: Array2<f64>,
    /// Per head, in head order.
    pub label_bias: Vec<Array1<f64>>,
    pub head_weights: Vec<Array2<f64>>,
    /// Head task names, used to label blocks in diagnostics.
    pub head_names: Vec<String>,
}

impl LayerGradient {
    pub fn zeros_like(params: &CrbmLayerParams) -> Self {
        LayerGradient {
            visible_bias: Array1::zeros(params.visible_dim),
            hidden_bias: Array1::zeros(params.hidden_dim),
            visible_ar: Array2::zeros(params.visible_ar.dim()),
            hidden_ar: Array2::zeros(params.hidden_ar.dim()),
            weights: Array2::zeros(params.weights.dim()),
            label_bias: params.heads.iter().map(|h| Array1::zeros(h.class_count())).collect(),
            head_weights: params.heads.iter().map(|h| Array2::zeros(h.weights.dim())).collect(),
            head_names: params.heads.iter().map(|h| h.task.name.clone()).collect(),
        }
    }

    /// `(block name, values)` for every block, in a fixed order.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("visible_bias".into(), slice(&self.visible_bias)),
            ("hidden_bias".into(), slice(&self.hidden_bias)),
            ("visible_ar".into(), slice2(&self.visible_ar)),
            ("hidden_ar".into(), slice2(&self.hidden_ar)),
            ("weights".into(), slice2(&self.weights)),
        ];
        for (i, name) in self.head_names.iter().enumerate() {
            out.push((format!("heads[{name}].label_bias"), slice(&self.label_bias[i])));
            out.push((format!("heads[{name}].weights"), slice2(&self.head_weights[i])));
        }
        out
    }

    fn first_non_finite(&self) -> Option<String> {
        self.blocks()
            .into_iter()
            .find(|(_, v)| v.iter().any(|x| !x.is_finite()))
            .map(|(name, _)| name)
    }

    fn sub_assign(&mut self, other: &LayerGradient) {
        self.visible_bias -= &other.visible_bias;
        self.hidden_bias -= &other.hidden_bias;
        self.visible_ar -= &other.visible_ar;
        self.hidden_ar -= &other.hidden_ar;
        self.weights -= &other.weights;
        for (a, b) in self.label_bias.iter_mut().zip(&other.label_bias) {
            *a -= b;
        }
        for (a, b) in self.head_weights.iter_mut().zip(&other.head_weights) {
            *a -= b;
        }
    }
}

fn slice(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

/// Gradients for every layer touched by one update, keyed by layer path
/// (`unimodal[<id>]`, `fusion`, `deep[<task>]`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientSet {
    pub layers: BTreeMap<String, LayerGradient>,
}

impl GradientSet {
    /// Fails on the first non-finite block, naming it.
    pub fn check_finite(&self) -> Result<()> {
        for (layer, g) in &self.layers {
            if let Some(block) = g.first_non_finite() {
                return Err(Error::NonFinite {
                    block: format!("{layer}.{block}"),
                });
            }
        }
        Ok(())
    }
}

/// Batch-averaged `−∂E/∂θ` for one layer. `labels` holds one `n × Y` block per
/// head (empty for a headless layer).
pub fn layer_statistics(
    params: &CrbmLayerParams,
    v: ArrayView2<f64>,
    hist: ArrayView2<f64>,
    h: ArrayView2<f64>,
    labels: &[ArrayView2<f64>],
) -> LayerGradient {
    let n = v.nrows() as f64;
    let (c, _) = dynamic_biases_batch(params, hist);
    let vis = match params.visible_kind {
        VisibleKind::Gaussian => &v - &c,
        VisibleKind::Binary => v.to_owned(),
    };
    let mut g = LayerGradient::zeros_like(params);
    g.visible_bias = vis.sum_axis(Axis(0)) / n;
    g.hidden_bias = h.sum_axis(Axis(0)) / n;
    if params.history_order > 0 {
        g.visible_ar = standard(hist.t().dot(&vis) / n);
        g.hidden_ar = standard(hist.t().dot(&h) / n);
    }
    g.weights = standard(v.t().dot(&h) / n);
    for (i, y) in labels.iter().enumerate() {
        g.label_bias[i] = y.sum_axis(Axis(0)) / n;
        g.head_weights[i] = standard(h.t().dot(y) / n);
    }
    g
}

// products of transposed views may come back column-major
fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// One minibatch for a single conditional layer.
#[derive(Debug, Clone)]
pub struct LayerBatch {
    pub visible: Array2<f64>,
    pub history: Array2<f64>,
    /// One-hot labels, one `n × Y` block per head in head order.
    pub labels: Vec<Array2<f64>>,
}

/// One minibatch for a fusion model.
#[derive(Debug, Clone)]
pub struct FusionBatch {
    pub visible: BTreeMap<String, Array2<f64>>,
    pub history: BTreeMap<String, Array2<f64>>,
    /// Window of previous concatenated unimodal hidden means.
    pub fusion_history: Array2<f64>,
    /// One-hot labels per task.
    pub labels: BTreeMap<String, Array2<f64>>,
}

/// Gradients plus the reconstruction error of the first top-down pass.
#[derive(Debug, Clone)]
pub struct CdOutcome {
    pub gradients: GradientSet,
    /// Sum of squared differences between data and reconstructed visible means.
    pub squared_error: f64,
    /// Number of visible entries contributing to `squared_error`.
    pub entries: usize,
}

/// Draws one class per row from row-wise distributions, returned one-hot.
pub fn sample_categorical_batch<R: Rng + ?Sized>(probs: &Array2<f64>, rng: &mut R) -> Array2<f64> {
    let mut out = Array2::zeros(probs.dim());
    for (i, row) in probs.rows().into_iter().enumerate() {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = row.len() - 1;
        for (k, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = k;
                break;
            }
        }
        out[[i, pick]] = 1.0;
    }
    out
}

fn sample_labels<R: Rng + ?Sized>(params: &CrbmLayerParams, h: &Array2<f64>, rng: &mut R) -> Vec<Array2<f64>> {
    params
        .heads
        .iter()
        .map(|head| sample_categorical_batch(&label_posterior_batch(head, h.view()), rng))
        .collect()
}

fn views(blocks: &[Array2<f64>]) -> Vec<ArrayView2<'_, f64>> {
    blocks.iter().map(|b| b.view()).collect()
}

fn check_layer_batch(params: &CrbmLayerParams, batch: &LayerBatch) -> Result<()> {
    let n = batch.visible.nrows();
    if n == 0 {
        return Err(Error::Data("empty minibatch".into()));
    }
    if batch.visible.ncols() != params.visible_dim {
        return Err(Error::shape("minibatch visible", params.visible_dim, batch.visible.ncols()));
    }
    if batch.history.dim() != (n, params.history_len()) {
        return Err(Error::shape(
            "minibatch history",
            format!("{n}×{}", params.history_len()),
            format!("{}×{}", batch.history.nrows(), batch.history.ncols()),
        ));
    }
    if batch.labels.len() != params.heads.len() {
        let missing = params.heads.get(batch.labels.len()).map(|h| h.task.name.clone());
        return match missing {
            Some(task) => Err(Error::MissingLabel(task)),
            None => Err(Error::UnexpectedLabels),
        };
    }
    for (head, y) in params.heads.iter().zip(&batch.labels) {
        if y.dim() != (n, head.class_count()) {
            return Err(Error::shape(format!("labels for `{}`", head.task.name), head.class_count(), y.ncols()));
        }
    }
    Ok(())
}

/// CD-k for one layer. The data phase clamps the labels; each reconstruction
/// step samples hidden states, then visibles and labels from their conditionals,
/// and recomputes the hidden means.
pub fn cd_step_layer<R: Rng + ?Sized>(
    params: &CrbmLayerParams,
    layer_name: &str,
    batch: &LayerBatch,
    cd_steps: usize,
    rng: &mut R,
) -> Result<CdOutcome> {
    check_layer_batch(params, batch)?;
    let v0 = &batch.visible;
    let (c, d) = dynamic_biases_batch(params, batch.history.view());
    let h0 = hidden_mean_batch(params, v0.view(), d.view(), &views(&batch.labels));
    let data = layer_statistics(params, v0.view(), batch.history.view(), h0.view(), &views(&batch.labels));

    let mut hs = sample_hidden_batch(&h0, rng);
    let mut squared_error = 0.0;
    let mut v = Array2::zeros((0, 0));
    let mut y = Vec::new();
    let mut hm = h0.clone();
    for step in 0..cd_steps.max(1) {
        let vmean = visible_mean_batch(params, hs.view(), c.view());
        if step == 0 {
            squared_error = (&vmean - v0).mapv(|x| x * x).sum();
        }
        v = sample_visible_batch(&vmean, params.visible_kind, rng);
        y = sample_labels(params, &hs, rng);
        hm = hidden_mean_batch(params, v.view(), d.view(), &views(&y));
        if step + 1 < cd_steps {
            hs = sample_hidden_batch(&hm, rng);
        }
    }
    let recon = layer_statistics(params, v.view(), batch.history.view(), hm.view(), &views(&y));
    let mut grad = data;
    grad.sub_assign(&recon);
    let gradients = GradientSet {
        layers: BTreeMap::from([(layer_name.to_string(), grad)]),
    };
    gradients.check_finite()?;
    Ok(CdOutcome {
        gradients,
        squared_error,
        entries: v0.len(),
    })
}

fn layer_labels(params: &CrbmLayerParams, labels: &BTreeMap<String, Array2<f64>>) -> Result<Vec<Array2<f64>>> {
    params
        .heads
        .iter()
        .map(|h| {
            labels
                .get(&h.task.name)
                .cloned()
                .ok_or_else(|| Error::MissingLabel(h.task.name.clone()))
        })
        .collect()
}

fn labels_by_task(params: &CrbmLayerParams, ys: &[Array2<f64>]) -> BTreeMap<String, Array2<f64>> {
    params.heads.iter().zip(ys).map(|(h, y)| (h.task.name.clone(), y.clone())).collect()
}

/// CD-k for a fusion model. Bottom-up: unimodal hidden means from the data,
/// sampled, concatenated and fed to the fusion layer (inference feeds means). Top-down: labels from
/// the fusion posterior, unimodal hidden states from their full conditionals
/// (including the fusion feedback), visibles from the unimodal layers. The
/// reconstruction statistics come from a second bottom-up pass.
pub fn cd_step_fusion<R: Rng + ?Sized>(
    model: &FusionModel,
    batch: &FusionBatch,
    cd_steps: usize,
    rng: &mut R,
) -> Result<CdOutcome> {
    let n = batch.fusion_history.nrows();
    if n == 0 {
        return Err(Error::Data("empty minibatch".into()));
    }
    let offsets = model.offsets();
    let fusion = &model.fusion;
    if batch.fusion_history.ncols() != fusion.history_len() {
        return Err(Error::shape("minibatch fusion history", fusion.history_len(), batch.fusion_history.ncols()));
    }

    struct Uni {
        c: Array2<f64>,
        d: Array2<f64>,
    }
    let mut uni = BTreeMap::new();
    let mut gradients = GradientSet::default();
    let mut hs0 = Vec::new();
    for (id, layer) in &model.unimodal {
        let v0 = crate::fusion::part(&batch.visible, id)?;
        let hist = crate::fusion::part(&batch.history, id)?;
        let lb = LayerBatch {
            visible: v0.clone(),
            history: hist.clone(),
            labels: layer_labels(layer, &batch.labels)?,
        };
        check_layer_batch(layer, &lb)?;
        let (c, d) = dynamic_biases_batch(layer, hist.view());
        let h0 = hidden_mean_batch(layer, v0.view(), d.view(), &views(&lb.labels));
        let data = layer_statistics(layer, v0.view(), hist.view(), h0.view(), &views(&lb.labels));
        gradients.layers.insert(format!("unimodal[{id}]"), data);
        hs0.push(sample_hidden_batch(&h0, rng));
        uni.insert(id.clone(), Uni { c, d });
    }
    let x0 = concat_columns(&hs0);
    let fusion_ys = layer_labels(fusion, &batch.labels)?;
    let (_, f) = dynamic_biases_batch(fusion, batch.fusion_history.view());
    let hf0 = hidden_mean_batch(fusion, x0.view(), f.view(), &views(&fusion_ys));
    let fusion_data = layer_statistics(fusion, x0.view(), batch.fusion_history.view(), hf0.view(), &views(&fusion_ys));

    let mut hfs = sample_hidden_batch(&hf0, rng);
    let mut squared_error = 0.0;
    let mut entries = 0;
    let mut recon_stats = BTreeMap::new();
    let mut fusion_recon = None;
    for step in 0..cd_steps.max(1) {
        // labels come from the fusion posterior; a headless fusion layer keeps the data labels
        let y1: BTreeMap<String, Array2<f64>> = if fusion.heads.is_empty() {
            batch.labels.clone()
        } else {
            labels_by_task(fusion, &sample_labels(fusion, &hfs, rng))
        };
        let mut xs1 = Vec::new();
        for (id, layer) in &model.unimodal {
            let u = &uni[id];
            let v0 = &batch.visible[id];
            let ys = if layer.heads.is_empty() { Vec::new() } else { layer_labels(layer, &y1)? };
            let (start, end) = offsets[id.as_str()];
            let mut act = u.d.clone();
            act += &v0.dot(&layer.weights);
            add_label_drive(layer, &views(&ys), &mut act);
            act += &hfs.dot(&fusion.weights.slice(ndarray::s![start..end, ..]).t());
            let h_top = sample_hidden_batch(&act.mapv(sigmoid), rng);
            let vmean = visible_mean_batch(layer, h_top.view(), u.c.view());
            if step == 0 {
                squared_error += (&vmean - v0).mapv(|x| x * x).sum();
                entries += v0.len();
            }
            let v1 = sample_visible_batch(&vmean, layer.visible_kind, rng);
            let h1 = hidden_mean_batch(layer, v1.view(), u.d.view(), &views(&ys));
            let hist = &batch.history[id];
            recon_stats.insert(
                id.clone(),
                layer_statistics(layer, v1.view(), hist.view(), h1.view(), &views(&ys)),
            );
            xs1.push(sample_hidden_batch(&h1, rng));
        }
        let x1 = concat_columns(&xs1);
        let fys = layer_labels(fusion, &y1)?;
        let hf1 = hidden_mean_batch(fusion, x1.view(), f.view(), &views(&fys));
        fusion_recon = Some(layer_statistics(fusion, x1.view(), batch.fusion_history.view(), hf1.view(), &views(&fys)));
        if step + 1 < cd_steps {
            hfs = sample_hidden_batch(&hf1, rng);
        }
    }
    for (id, recon) in recon_stats {
        gradients.layers.get_mut(&format!("unimodal[{id}]")).expect("inserted").sub_assign(&recon);
    }
    let mut fg = fusion_data;
    fg.sub_assign(&fusion_recon.expect("at least one step"));
    // the fusion layer has no visible bias or visible history terms
    fg.visible_bias.fill(0.0);
    fg.visible_ar.fill(0.0);
    gradients.layers.insert("fusion".into(), fg);
    gradients.check_finite()?;
    Ok(CdOutcome {
        gradients,
        squared_error,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::{energy_mtcrbm, one_hot};
    use crate::layers::HistoryWindow;
    use crate::model::{TaskHead, TaskSpec};
    use ndarray::{array, Array1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_layer(
        d: usize,
        h: usize,
        n: usize,
        kind: VisibleKind,
        ys: &[usize],
        seed: u64,
    ) -> CrbmLayerParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut l = CrbmLayerParams::zeros(d, h, n, kind);
        let mut r = |_: f64| rng.random_range(-1.0..1.0);
        l.visible_bias.mapv_inplace(&mut r);
        l.hidden_bias.mapv_inplace(&mut r);
        l.visible_ar.mapv_inplace(&mut r);
        l.hidden_ar.mapv_inplace(&mut r);
        l.weights.mapv_inplace(&mut r);
        for (i, &y) in ys.iter().enumerate() {
            let mut head = TaskHead::zeros(TaskSpec::new(format!("t{i}"), y).unwrap(), h);
            head.label_bias.mapv_inplace(&mut r);
            head.weights.mapv_inplace(&mut r);
            l.heads.push(head);
        }
        l
    }

    /// Central differences of −E on one sample, block by block, against the
    /// single-sample statistics (hidden units take fractional values, which
    /// the energy handles as a polynomial in h).
    fn finite_difference_check(kind: VisibleKind) {
        let l = random_layer(3, 4, 2, kind, &[3, 2], 17);
        let v = array![0.4, -0.7, 1.1];
        let h = array![0.2, 0.9, 0.5, 0.35];
        let u = Array1::from_shape_fn(6, |i| (i as f64 * 0.7).cos());
        let ys = vec![one_hot(1, 3), one_hot(0, 2)];
        let hist = HistoryWindow::new(u.clone(), 2, 3, 0).unwrap();
        let stats = layer_statistics(
            &l,
            v.view().insert_axis(Axis(0)),
            u.view().insert_axis(Axis(0)),
            h.view().insert_axis(Axis(0)),
            &ys.iter().map(|y| y.view().insert_axis(Axis(0))).collect::<Vec<_>>(),
        );
        let neg_energy = |p: &CrbmLayerParams| -energy_mtcrbm(p, v.view(), h.view(), &ys, &hist).unwrap();
        let step = 1e-5;
        let blocks = stats.blocks();
        let mut covered = 0;
        for (b, (name, analytic)) in blocks.iter().enumerate() {
            for (i, &g) in analytic.iter().enumerate() {
                let mut plus = l.clone();
                let mut minus = l.clone();
                *param_at(&mut plus, b, i) += step;
                *param_at(&mut minus, b, i) -= step;
                let numeric = (neg_energy(&plus) - neg_energy(&minus)) / (2.0 * step);
                let rel = (numeric - g).abs() / g.abs().max(1.0);
                assert!(rel < 1e-6, "{name}[{i}]: numeric {numeric} analytic {g}");
            }
            covered += 1;
        }
        assert_eq!(covered, 9);
    }

    fn param_at(p: &mut CrbmLayerParams, block: usize, i: usize) -> &mut f64 {
        let slice = match block {
            0 => p.visible_bias.as_slice_mut(),
            1 => p.hidden_bias.as_slice_mut(),
            2 => p.visible_ar.as_slice_mut(),
            3 => p.hidden_ar.as_slice_mut(),
            4 => p.weights.as_slice_mut(),
            b => {
                let head = &mut p.heads[(b - 5) / 2];
                if (b - 5) % 2 == 0 {
                    head.label_bias.as_slice_mut()
                } else {
                    head.weights.as_slice_mut()
                }
            }
        };
        &mut slice.unwrap()[i]
    }

    #[test]
    fn statistics_match_finite_differences_gaussian() {
        finite_difference_check(VisibleKind::Gaussian);
    }

    #[test]
    fn statistics_match_finite_differences_binary() {
        finite_difference_check(VisibleKind::Binary);
    }

    #[test]
    fn zero_model_visible_bias_gradient_tracks_data_mean() {
        let l = CrbmLayerParams::zeros(2, 3, 0, VisibleKind::Gaussian);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let visible = Array2::from_shape_fn((20_000, 2), |(_, j)| if j == 0 { 1.0 } else { -0.5 });
        let batch = LayerBatch {
            history: Array2::zeros((20_000, 0)),
            visible,
            labels: vec![],
        };
        let out = cd_step_layer(&l, "unimodal[m]", &batch, 1, &mut rng).unwrap();
        let g = &out.gradients.layers["unimodal[m]"].visible_bias;
        assert!((g[0] - 1.0).abs() < 0.03 && (g[1] + 0.5).abs() < 0.03, "{g}");
    }

    #[test]
    fn missing_labels_are_rejected() {
        let l = random_layer(2, 2, 0, VisibleKind::Gaussian, &[2], 1);
        let batch = LayerBatch {
            visible: Array2::zeros((3, 2)),
            history: Array2::zeros((3, 0)),
            labels: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(cd_step_layer(&l, "x", &batch, 1, &mut rng), Err(Error::MissingLabel(t)) if t == "t0"));
    }

    #[test]
    fn non_finite_gradient_names_the_block() {
        let mut l = random_layer(2, 2, 0, VisibleKind::Gaussian, &[], 1);
        l.weights[[0, 0]] = f64::NAN;
        let batch = LayerBatch {
            visible: Array2::ones((3, 2)),
            history: Array2::zeros((3, 0)),
            labels: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        match cd_step_layer(&l, "unimodal[m]", &batch, 1, &mut rng) {
            Err(Error::NonFinite { block }) => assert!(block.starts_with("unimodal[m]."), "{block}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn categorical_sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let probs = Array2::from_shape_fn((50_000, 3), |(_, k)| [0.2, 0.5, 0.3][k]);
        let s = sample_categorical_batch(&probs, &mut rng);
        let freq = s.sum_axis(Axis(0)) / 50_000.0;
        for (f, p) in freq.iter().zip([0.2, 0.5, 0.3]) {
            assert!((f - p).abs() < 0.01);
        }
        assert!(s.rows().into_iter().all(|r| r.sum() == 1.0));
    }
}
