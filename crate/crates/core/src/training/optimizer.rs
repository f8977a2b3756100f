//! Momentum update with weight decay on weight matrices only.

use super::gradient::LayerGradient;
use super::TrainConfig;
use crate::model::CrbmLayerParams;

/// `velocity ← momentum·velocity + lr·(grad − decay·θ)`, then `θ ← θ + velocity`.
/// Biases are not decayed. A zero velocity leaves a parameter bit-for-bit unchanged.
pub fn apply_update(
    params: &mut CrbmLayerParams,
    grad: &LayerGradient,
    velocity: &mut LayerGradient,
    config: &TrainConfig,
) {
    let step = |theta: &mut [f64], g: &[f64], vel: &mut [f64], decay: bool| {
        let wd = if decay { config.weight_decay } else { 0.0 };
        for ((t, &g), v) in theta.iter_mut().zip(g).zip(vel.iter_mut()) {
            *v = config.momentum * *v + config.learning_rate * (g - wd * *t);
            if *v != 0.0 {
                *t += *v;
            }
        }
    };
    macro_rules! block {
        ($field:ident, $decay:expr) => {
            step(
                params.$field.as_slice_mut().expect("standard layout"),
                grad.$field.as_slice().expect("standard layout"),
                velocity.$field.as_slice_mut().expect("standard layout"),
                $decay,
            )
        };
    }
    block!(visible_bias, false);
    block!(hidden_bias, false);
    block!(visible_ar, true);
    block!(hidden_ar, true);
    block!(weights, true);
    for (i, head) in params.heads.iter_mut().enumerate() {
        step(
            head.label_bias.as_slice_mut().expect("standard layout"),
            grad.label_bias[i].as_slice().expect("standard layout"),
            velocity.label_bias[i].as_slice_mut().expect("standard layout"),
            false,
        );
        step(
            head.weights.as_slice_mut().expect("standard layout"),
            grad.head_weights[i].as_slice().expect("standard layout"),
            velocity.head_weights[i].as_slice_mut().expect("standard layout"),
            true,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TaskHead, TaskSpec, VisibleKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(seed: u64) -> (CrbmLayerParams, LayerGradient) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = CrbmLayerParams::zeros(3, 2, 1, VisibleKind::Gaussian);
        p.heads.push(TaskHead::zeros(TaskSpec::new("t", 2).unwrap(), 2));
        let mut g = LayerGradient::zeros_like(&p);
        let mut r = |_: f64| rng.random_range(-1.0..1.0);
        p.weights.mapv_inplace(&mut r);
        p.visible_ar.mapv_inplace(&mut r);
        p.hidden_bias.mapv_inplace(&mut r);
        p.heads[0].weights.mapv_inplace(&mut r);
        g.weights.mapv_inplace(&mut r);
        g.visible_ar.mapv_inplace(&mut r);
        g.hidden_bias.mapv_inplace(&mut r);
        g.head_weights[0].mapv_inplace(&mut r);
        g.label_bias[0].mapv_inplace(&mut r);
        (p, g)
    }

    #[test]
    fn plain_update_is_lr_times_gradient() {
        let (p, g) = random_params(1);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut q = p.clone();
        let mut vel = LayerGradient::zeros_like(&p);
        apply_update(&mut q, &g, &mut vel, &cfg);
        for ((a, b), d) in q.weights.iter().zip(p.weights.iter()).zip(g.weights.iter()) {
            assert_eq!(*a, b + 0.1 * d);
        }
        for ((a, b), d) in q.heads[0].label_bias.iter().zip(p.heads[0].label_bias.iter()).zip(g.label_bias[0].iter()) {
            assert_eq!(*a, b + 0.1 * d);
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (p, g) = random_params(2);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let mut q = p.clone();
        let mut vel = LayerGradient::zeros_like(&p);
        for _ in 0..3 {
            apply_update(&mut q, &g, &mut vel, &cfg);
        }
        assert_eq!(q, p);
    }

    #[test]
    fn decay_skips_biases() {
        let (p, _) = random_params(3);
        let g = LayerGradient::zeros_like(&p);
        let cfg = TrainConfig {
            learning_rate: 1.0,
            momentum: 0.0,
            weight_decay: 0.5,
            ..TrainConfig::default()
        };
        let mut q = p.clone();
        let mut vel = LayerGradient::zeros_like(&p);
        apply_update(&mut q, &g, &mut vel, &cfg);
        assert_eq!(q.hidden_bias, p.hidden_bias);
        for (a, b) in q.weights.iter().zip(p.weights.iter()) {
            assert_eq!(*a, b + (-(0.5 * b)));
        }
    }
}
