//! Scalar helpers shared by the layer and head code.

use ndarray::{Array1, ArrayView1, ArrayViewMut1};

/// Largest double below 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, evaluated without overflow for large |x|. Saturated
/// values are held strictly inside (0, 1) so probabilities never reach 0 or 1.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

/// `log Σ exp(x_k)` with max-subtraction.
pub fn log_sum_exp(values: ArrayView1<f64>) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Softmax of a logit vector.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let mut out = logits.to_owned();
    softmax_in_place(out.view_mut());
    out
}

pub fn softmax_in_place(mut logits: ArrayViewMut1<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in logits.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in logits.iter_mut() {
        *x /= sum;
    }
}

/// Index of the largest component; ties resolve to the lowest index.
pub fn argmax(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &x) in values.iter().enumerate() {
        if x > values[best] {
            best = k;
        }
    }
    best
}
