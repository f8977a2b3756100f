//! Conditional RBM layer math: dynamic biases, factorial conditionals,
//! sampling and the energy function.
//!
//! For a layer with static biases `a`, `b`, autoregressive matrices `A`, `B`,
//! and weights `W`, and a history window `u` of the previous `N` frames:
//!
//! ```text
//! c = a + Aᵀu              (visible dynamic bias)
//! d = b + Bᵀu              (hidden dynamic bias)
//! p(h_j = 1 | v, u)  = σ(d_j + Σ_i v_i w_ij [+ Σ_l Σ_k y_lk u^l_jk])
//! p(v_i | h, u)      = N(c_i + Σ_j w_ij h_j, 1)       gaussian visibles
//!                    = σ(c_i + Σ_j w_ij h_j)           binary visibles
//! E(v, h | u)        = Σ_i (c_i − v_i)²/2 − d·h − vᵀWh  gaussian visibles
//!                    = −c·v − d·h − vᵀWh               binary visibles
//! ```
//!
//! Single-vector functions validate shapes and return errors. The `_batch`
//! variants work on row-stacked matrices, are used by training and sequence
//! inference, and panic on shape mismatches.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::model::{CrbmLayerParams, VisibleKind};

/// The previous `order` frames concatenated oldest-first (most recent last).
/// Frames before the start of a sequence are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow {
    values: Array1<f64>,
    order: usize,
    dim: usize,
    padding: usize,
}

impl HistoryWindow {
    pub fn new(values: Array1<f64>, order: usize, dim: usize, padding: usize) -> Result<Self> {
        if values.len() != order * dim {
            return Err(Error::shape("history window", order * dim, values.len()));
        }
        if padding > order {
            return Err(Error::shape("history padding", format!("≤ {order}"), padding));
        }
        Ok(HistoryWindow {
            values,
            order,
            dim,
            padding,
        })
    }

    /// A window made entirely of padding (the start of a sequence).
    pub fn zeros(order: usize, dim: usize) -> Self {
        HistoryWindow {
            values: Array1::zeros(order * dim),
            order,
            dim,
            padding: order,
        }
    }

    /// The window preceding frame `t` of `frames` (one row per frame).
    pub fn from_frames(frames: ArrayView2<f64>, t: usize, order: usize) -> Self {
        let dim = frames.ncols();
        let mut values = Array1::zeros(order * dim);
        fill_history(frames, t, order, values.view_mut());
        HistoryWindow {
            values,
            order,
            dim,
            padding: order.saturating_sub(t),
        }
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.values.view()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `weight · self + (1 − weight) · other`, elementwise.
    pub fn blend(&self, other: &HistoryWindow, weight: f64) -> Result<HistoryWindow> {
        if self.order != other.order || self.dim != other.dim {
            return Err(Error::shape(
                "blended history",
                format!("{}×{}", self.order, self.dim),
                format!("{}×{}", other.order, other.dim),
            ));
        }
        let values = &self.values * weight + &other.values * (1.0 - weight);
        Ok(HistoryWindow {
            values,
            order: self.order,
            dim: self.dim,
            padding: self.padding.max(other.padding),
        })
    }
}

fn fill_history(frames: ArrayView2<f64>, t: usize, order: usize, mut out: ArrayViewMut1<f64>) {
    let dim = frames.ncols();
    for slot in 0..order {
        // slot 0 holds frame t − order, slot order−1 holds frame t − 1
        let mut dst = out.slice_mut(s![slot * dim..(slot + 1) * dim]);
        match (t + slot).checked_sub(order) {
            Some(src) => dst.assign(&frames.row(src)),
            None => dst.fill(0.0),
        }
    }
}

/// Row `t` is the history window preceding frame `t`.
pub fn history_matrix(frames: ArrayView2<f64>, order: usize) -> Array2<f64> {
    let mut out = Array2::zeros((frames.nrows(), order * frames.ncols()));
    for (t, row) in out.rows_mut().into_iter().enumerate() {
        fill_history(frames, t, order, row);
    }
    out
}

pub(crate) fn history_row_into(frames: ArrayView2<f64>, t: usize, order: usize, out: ArrayViewMut1<f64>) {
    fill_history(frames, t, order, out);
}

fn check_len(block: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::shape(block, expected, found))
    } else {
        Ok(())
    }
}

/// History-dependent visible and hidden biases `(c, d)`.
pub fn dynamic_biases(
    params: &CrbmLayerParams,
    hist: &HistoryWindow,
) -> Result<(Array1<f64>, Array1<f64>)> {
    check_len("history window", params.history_len(), hist.len())?;
    let u = hist.values();
    let mut c = params.visible_bias.clone();
    let mut d = params.hidden_bias.clone();
    for (p, &up) in u.iter().enumerate() {
        if up == 0.0 {
            continue;
        }
        for (ci, &a) in c.iter_mut().zip(params.visible_ar.row(p)) {
            *ci += a * up;
        }
        for (dj, &b) in d.iter_mut().zip(params.hidden_ar.row(p)) {
            *dj += b * up;
        }
    }
    Ok((c, d))
}

/// Checks that each label vector is a distribution over its head's classes.
pub(crate) fn check_label_vectors(params: &CrbmLayerParams, labels: &[Array1<f64>]) -> Result<()> {
    if params.heads.is_empty() {
        return Err(Error::UnexpectedLabels);
    }
    check_len("label vectors", params.heads.len(), labels.len())?;
    for (head, y) in params.heads.iter().zip(labels) {
        let name = &head.task.name;
        check_len(&format!("label vector for `{name}`"), head.class_count(), y.len())?;
        let sum: f64 = y.sum();
        if y.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidLabel {
                task: name.clone(),
                reason: format!("entries must lie in [0, 1] and sum to 1 (sum = {sum})"),
            });
        }
    }
    Ok(())
}

/// `p(h = 1 | v, history[, labels])`, where `d` is the hidden dynamic bias.
/// Label vectors, when given, are one per head in head order.
pub fn hidden_mean(
    params: &CrbmLayerParams,
    v: ArrayView1<f64>,
    d: ArrayView1<f64>,
    labels: Option<&[Array1<f64>]>,
) -> Result<Array1<f64>> {
    let mut act = hidden_input(params, v, d, labels)?;
    act.mapv_inplace(sigmoid);
    Ok(act)
}

/// Total input to each hidden unit (the argument of the logistic in [`hidden_mean`]).
pub fn hidden_input(
    params: &CrbmLayerParams,
    v: ArrayView1<f64>,
    d: ArrayView1<f64>,
    labels: Option<&[Array1<f64>]>,
) -> Result<Array1<f64>> {
    check_len("visible vector", params.visible_dim, v.len())?;
    check_len("hidden dynamic bias", params.hidden_dim, d.len())?;
    if let Some(ys) = labels {
        check_label_vectors(params, ys)?;
    }
    let mut act = d.to_owned();
    for (i, &vi) in v.iter().enumerate() {
        for (a, &w) in act.iter_mut().zip(params.weights.row(i)) {
            *a += vi * w;
        }
    }
    if let Some(ys) = labels {
        for (head, y) in params.heads.iter().zip(ys) {
            for (j, a) in act.iter_mut().enumerate() {
                for (k, &yk) in y.iter().enumerate() {
                    *a += yk * head.weights[[j, k]];
                }
            }
        }
    }
    Ok(act)
}

/// Conditional mean of the visible units given hidden states and the visible
/// dynamic bias `c`.
pub fn visible_mean(
    params: &CrbmLayerParams,
    h: ArrayView1<f64>,
    c: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    check_len("hidden vector", params.hidden_dim, h.len())?;
    check_len("visible dynamic bias", params.visible_dim, c.len())?;
    let mut out = c.to_owned();
    for (i, o) in out.iter_mut().enumerate() {
        for (&w, &hj) in params.weights.row(i).iter().zip(h.iter()) {
            *o += w * hj;
        }
    }
    if params.visible_kind == VisibleKind::Binary {
        out.mapv_inplace(sigmoid);
    }
    Ok(out)
}

/// Independent Bernoulli draws.
pub fn sample_hidden<R: Rng + ?Sized>(mean: ArrayView1<f64>, rng: &mut R) -> Array1<f64> {
    mean.mapv(|p| bernoulli(p, rng))
}

/// Gaussian visibles add unit-variance noise to the mean; binary visibles are Bernoulli.
pub fn sample_visible<R: Rng + ?Sized>(
    mean: ArrayView1<f64>,
    kind: VisibleKind,
    rng: &mut R,
) -> Array1<f64> {
    match kind {
        VisibleKind::Gaussian => mean.mapv(|m| m + rng.sample::<f64, _>(StandardNormal)),
        VisibleKind::Binary => sample_hidden(mean, rng),
    }
}

#[inline]
fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> f64 {
    // `random` is in [0, 1): p = 0 never fires, p = 1 always fires
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// Energy of a joint visible/hidden configuration given the history window.
pub fn energy_crbm(
    params: &CrbmLayerParams,
    v: ArrayView1<f64>,
    h: ArrayView1<f64>,
    hist: &HistoryWindow,
) -> Result<f64> {
    check_len("visible vector", params.visible_dim, v.len())?;
    check_len("hidden vector", params.hidden_dim, h.len())?;
    let (c, d) = dynamic_biases(params, hist)?;
    Ok(energy_with_biases(params, v, h, c.view(), d.view()))
}

/// Energy of a plain RBM layer (no history).
pub fn energy_rbm(params: &CrbmLayerParams, v: ArrayView1<f64>, h: ArrayView1<f64>) -> Result<f64> {
    if params.history_order != 0 {
        return Err(Error::shape("history order for an RBM energy", 0, params.history_order));
    }
    energy_crbm(params, v, h, &HistoryWindow::zeros(0, params.visible_dim))
}

pub(crate) fn energy_with_biases(
    params: &CrbmLayerParams,
    v: ArrayView1<f64>,
    h: ArrayView1<f64>,
    c: ArrayView1<f64>,
    d: ArrayView1<f64>,
) -> f64 {
    let mut e = 0.0;
    match params.visible_kind {
        VisibleKind::Gaussian => {
            for (&ci, &vi) in c.iter().zip(v.iter()) {
                e += (ci - vi) * (ci - vi) / 2.0;
            }
        }
        VisibleKind::Binary => {
            for (&ci, &vi) in c.iter().zip(v.iter()) {
                e -= ci * vi;
            }
        }
    }
    for (&dj, &hj) in d.iter().zip(h.iter()) {
        e -= dj * hj;
    }
    for (i, &vi) in v.iter().enumerate() {
        for (&w, &hj) in params.weights.row(i).iter().zip(h.iter()) {
            e -= vi * w * hj;
        }
    }
    e
}

// ---------------------------------------------------------------------------
// Batched forms (rows are independent samples).

/// Dynamic biases for every row of a history matrix.
pub fn dynamic_biases_batch(
    params: &CrbmLayerParams,
    hist: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    assert_eq!(hist.ncols(), params.history_len(), "history width");
    let n = hist.nrows();
    let mut c = params.visible_bias.broadcast((n, params.visible_dim)).unwrap().to_owned();
    let mut d = params.hidden_bias.broadcast((n, params.hidden_dim)).unwrap().to_owned();
    if params.history_order > 0 {
        c += &hist.dot(&params.visible_ar);
        d += &hist.dot(&params.hidden_ar);
    }
    (c, d)
}

/// Hidden means for every row; `labels` holds one `n × Y` matrix per head, or is empty.
pub fn hidden_mean_batch(
    params: &CrbmLayerParams,
    v: ArrayView2<f64>,
    d: ArrayView2<f64>,
    labels: &[ArrayView2<f64>],
) -> Array2<f64> {
    let mut act = d.to_owned();
    act += &v.dot(&params.weights);
    add_label_drive(params, labels, &mut act);
    act.mapv_inplace(sigmoid);
    act
}

pub(crate) fn add_label_drive(params: &CrbmLayerParams, labels: &[ArrayView2<f64>], act: &mut Array2<f64>) {
    if labels.is_empty() {
        return;
    }
    assert_eq!(labels.len(), params.heads.len(), "one label block per head");
    for (head, y) in params.heads.iter().zip(labels) {
        *act += &y.dot(&head.weights.t());
    }
}

/// Visible conditional means for every row.
pub fn visible_mean_batch(
    params: &CrbmLayerParams,
    h: ArrayView2<f64>,
    c: ArrayView2<f64>,
) -> Array2<f64> {
    let mut out = c.to_owned();
    out += &h.dot(&params.weights.t());
    if params.visible_kind == VisibleKind::Binary {
        out.mapv_inplace(sigmoid);
    }
    out
}

pub fn sample_hidden_batch<R: Rng + ?Sized>(mean: &Array2<f64>, rng: &mut R) -> Array2<f64> {
    mean.mapv(|p| bernoulli(p, rng))
}

pub fn sample_visible_batch<R: Rng + ?Sized>(
    mean: &Array2<f64>,
    kind: VisibleKind,
    rng: &mut R,
) -> Array2<f64> {
    match kind {
        VisibleKind::Gaussian => mean.mapv(|m| m + rng.sample::<f64, _>(StandardNormal)),
        VisibleKind::Binary => sample_hidden_batch(mean, rng),
    }
}

/// Label-free hidden means for every frame of a sequence, with zero-padded history.
pub fn hidden_mean_sequence(params: &CrbmLayerParams, frames: ArrayView2<f64>) -> Array2<f64> {
    let hist = history_matrix(frames, params.history_order);
    let (_, d) = dynamic_biases_batch(params, hist.view());
    hidden_mean_batch(params, frames, d.view(), &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TaskHead, TaskSpec};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_layer(d: usize, h: usize, n: usize, heads: &[usize], seed: u64) -> CrbmLayerParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut l = CrbmLayerParams::zeros(d, h, n, VisibleKind::Gaussian);
        let mut fill = |m: &mut [f64]| {
            for x in m {
                *x = rng.random_range(-1.0..1.0);
            }
        };
        fill(l.visible_bias.as_slice_mut().unwrap());
        fill(l.hidden_bias.as_slice_mut().unwrap());
        fill(l.visible_ar.as_slice_mut().unwrap());
        fill(l.hidden_ar.as_slice_mut().unwrap());
        fill(l.weights.as_slice_mut().unwrap());
        for (i, &y) in heads.iter().enumerate() {
            let mut head = TaskHead::zeros(TaskSpec::new(format!("t{i}"), y).unwrap(), h);
            fill(head.label_bias.as_slice_mut().unwrap());
            fill(head.weights.as_slice_mut().unwrap());
            l.heads.push(head);
        }
        l
    }

    fn random_vec(len: usize, seed: u64) -> Array1<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array1::from_shape_fn(len, |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn history_window_pads_the_start() {
        let frames = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let w0 = HistoryWindow::from_frames(frames.view(), 0, 2);
        assert_eq!(w0.values(), array![0.0, 0.0, 0.0, 0.0]);
        assert_eq!(w0.padding(), 2);
        let w1 = HistoryWindow::from_frames(frames.view(), 1, 2);
        assert_eq!(w1.values(), array![0.0, 0.0, 1.0, 2.0]);
        assert_eq!(w1.padding(), 1);
        let w2 = HistoryWindow::from_frames(frames.view(), 2, 2);
        assert_eq!(w2.values(), array![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(w2.padding(), 0);
        let m = history_matrix(frames.view(), 2);
        assert_eq!(m.row(2), w2.values());
        assert!(HistoryWindow::new(Array1::zeros(3), 2, 2, 0).is_err());
    }

    #[test]
    fn zero_autoregression_gives_static_biases() {
        let mut l = random_layer(3, 2, 2, &[], 1);
        l.visible_ar.fill(0.0);
        l.hidden_ar.fill(0.0);
        let hist = HistoryWindow::new(random_vec(6, 2), 2, 3, 0).unwrap();
        let (c, d) = dynamic_biases(&l, &hist).unwrap();
        assert_eq!(c, l.visible_bias);
        assert_eq!(d, l.hidden_bias);
    }

    #[test]
    fn scalar_dynamic_bias() {
        let mut l = CrbmLayerParams::zeros(1, 1, 1, VisibleKind::Gaussian);
        l.visible_ar[[0, 0]] = 2.0;
        l.hidden_ar[[0, 0]] = -1.0;
        let hist = HistoryWindow::new(array![0.5], 1, 1, 0).unwrap();
        let (c, d) = dynamic_biases(&l, &hist).unwrap();
        assert_eq!(c, array![1.0]);
        assert_eq!(d, array![-0.5]);
    }

    #[test]
    fn dynamic_biases_match_dense_oracle() {
        let l = random_layer(3, 2, 2, &[], 7);
        let u = random_vec(6, 8);
        let hist = HistoryWindow::new(u.clone(), 2, 3, 0).unwrap();
        let (c, d) = dynamic_biases(&l, &hist).unwrap();
        // c_i = a_i + Σ_p A_pi u_p written out column by column
        for i in 0..3 {
            let mut expect = l.visible_bias[i];
            for p in 0..6 {
                expect += l.visible_ar[[p, i]] * u[p];
            }
            assert!((c[i] - expect).abs() < 1e-12);
        }
        for j in 0..2 {
            let mut expect = l.hidden_bias[j];
            for p in 0..6 {
                expect += l.hidden_ar[[p, j]] * u[p];
            }
            assert!((d[j] - expect).abs() < 1e-12);
        }
        assert!(dynamic_biases(&l, &HistoryWindow::zeros(1, 3)).is_err());
    }

    #[test]
    fn hidden_mean_edge_cases() {
        let l = CrbmLayerParams::zeros(3, 4, 0, VisibleKind::Gaussian);
        let h = hidden_mean(&l, random_vec(3, 1).view(), Array1::zeros(4).view(), None).unwrap();
        assert!(h.iter().all(|&x| x == 0.5));
        assert!(matches!(
            hidden_mean(&l, random_vec(3, 1).view(), Array1::zeros(4).view(), Some(&[array![1.0, 0.0]])),
            Err(Error::UnexpectedLabels)
        ));

        let mut l = CrbmLayerParams::zeros(2, 3, 0, VisibleKind::Gaussian);
        let mut head = TaskHead::zeros(TaskSpec::new("t", 3).unwrap(), 3);
        head.weights.column_mut(1).fill(20.0);
        l.heads.push(head);
        let h = hidden_mean(&l, Array1::zeros(2).view(), Array1::zeros(3).view(), Some(&[array![0.0, 1.0, 0.0]]))
            .unwrap();
        assert!(h.iter().all(|&x| (1.0 - x) < 1e-8));
        let bad = hidden_mean(&l, Array1::zeros(2).view(), Array1::zeros(3).view(), Some(&[array![0.5, 0.0, 0.0]]));
        assert!(matches!(bad, Err(Error::InvalidLabel { .. })));
    }

    #[test]
    fn hidden_mean_matches_scalar_sigmoid_oracle() {
        let l = random_layer(2, 2, 0, &[3], 11);
        let v = random_vec(2, 12);
        let d = random_vec(2, 13);
        let y = array![0.0, 0.0, 1.0];
        let h = hidden_mean(&l, v.view(), d.view(), Some(&[y])).unwrap();
        for j in 0..2 {
            let x = d[j] + v[0] * l.weights[[0, j]] + v[1] * l.weights[[1, j]] + l.heads[0].weights[[j, 2]];
            let expect = 1.0 / (1.0 + (-x).exp());
            assert!((h[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn visible_mean_cases() {
        let l = random_layer(3, 2, 0, &[], 5);
        let c = random_vec(3, 6);
        assert_eq!(visible_mean(&l, Array1::zeros(2).view(), c.view()).unwrap(), c);
        let h = random_vec(2, 9);
        let m = visible_mean(&l, h.view(), c.view()).unwrap();
        for i in 0..3 {
            let expect = c[i] + l.weights[[i, 0]] * h[0] + l.weights[[i, 1]] * h[1];
            assert!((m[i] - expect).abs() < 1e-12);
        }
        let mut z = l.clone();
        z.weights.fill(0.0);
        assert_eq!(visible_mean(&z, h.view(), c.view()).unwrap(), c);
        let mut b = l.clone();
        b.visible_kind = VisibleKind::Binary;
        let mb = visible_mean(&b, h.view(), c.view()).unwrap();
        for i in 0..3 {
            assert!((mb[i] - sigmoid(m[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn bernoulli_sampling_extremes_and_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_hidden(Array1::zeros(50).view(), &mut rng).iter().all(|&x| x == 0.0));
        assert!(sample_hidden(Array1::ones(50).view(), &mut rng).iter().all(|&x| x == 1.0));
        let draws = sample_hidden(Array1::from_elem(100_000, 0.3).view(), &mut rng);
        let freq = draws.sum() / 1e5;
        assert!((freq - 0.3).abs() < 0.01, "{freq}");
    }

    #[test]
    fn gaussian_visible_sampling_has_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = sample_visible(Array1::from_elem(50_000, 2.0).view(), VisibleKind::Gaussian, &mut rng);
        let m = s.mean().unwrap();
        let var = s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / s.len() as f64;
        assert!((m - 2.0).abs() < 0.02);
        assert!((var - 1.0).abs() < 0.03);
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let m = random_vec(5, 1);
        assert_eq!(
            sample_visible(m.view(), VisibleKind::Gaussian, &mut r1),
            sample_visible(m.view(), VisibleKind::Gaussian, &mut r2)
        );
    }

    #[test]
    fn energy_simple_cases() {
        let l = CrbmLayerParams::zeros(2, 3, 1, VisibleKind::Gaussian);
        let hist = HistoryWindow::zeros(1, 2);
        assert_eq!(energy_crbm(&l, Array1::zeros(2).view(), Array1::zeros(3).view(), &hist).unwrap(), 0.0);

        let mut l = random_layer(3, 2, 0, &[], 2);
        l.weights.fill(0.0);
        let h0 = Array1::zeros(2);
        let c = l.visible_bias.clone();
        let e_at = |v: &Array1<f64>| energy_rbm(&l, v.view(), h0.view()).unwrap();
        assert!(e_at(&c).abs() < 1e-15);
        let v = random_vec(3, 3);
        let expect: f64 = c.iter().zip(v.iter()).map(|(c, v)| (c - v) * (c - v) / 2.0).sum();
        assert!((e_at(&v) - expect).abs() < 1e-12);
        assert!(e_at(&v) > e_at(&c));
    }

    #[test]
    fn rbm_energy_equals_crbm_energy_at_zero_order() {
        let l = random_layer(3, 4, 0, &[], 21);
        let v = random_vec(3, 1);
        let h = array![1.0, 0.0, 1.0, 1.0];
        let a = energy_rbm(&l, v.view(), h.view()).unwrap();
        let b = energy_crbm(&l, v.view(), h.view(), &HistoryWindow::zeros(0, 3)).unwrap();
        assert_eq!(a, b);
        assert!(energy_rbm(&random_layer(3, 4, 1, &[], 1), v.view(), h.view()).is_err());
    }

    #[test]
    fn batch_forms_agree_with_vector_forms() {
        let l = random_layer(3, 4, 2, &[3], 31);
        let frames = Array2::from_shape_fn((5, 3), |(t, i)| ((t * 3 + i) as f64 * 0.37).sin());
        let hist = history_matrix(frames.view(), 2);
        let (c, d) = dynamic_biases_batch(&l, hist.view());
        let labels = Array2::from_shape_fn((5, 3), |(t, k)| if k == t % 3 { 1.0 } else { 0.0 });
        let hm = hidden_mean_batch(&l, frames.view(), d.view(), &[labels.view()]);
        let vm = visible_mean_batch(&l, hm.view(), c.view());
        for t in 0..5 {
            let w = HistoryWindow::from_frames(frames.view(), t, 2);
            let (ct, dt) = dynamic_biases(&l, &w).unwrap();
            let y = labels.row(t).to_owned();
            let ht = hidden_mean(&l, frames.row(t), dt.view(), Some(&[y])).unwrap();
            let vt = visible_mean(&l, ht.view(), ct.view()).unwrap();
            for (a, b) in ht.iter().zip(hm.row(t)) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in vt.iter().zip(vm.row(t)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
