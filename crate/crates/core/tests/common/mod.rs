#![allow(dead_code)]

use edcforge_core::nn::{backward, batch_mse, forward_from, ModelParams, ModelShape, Mode};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Hidden 8, dense 16, output 8.
pub fn small_shape() -> ModelShape {
    ModelShape {
        hidden: 8,
        dense: 16,
        output: 8,
        ..ModelShape::default()
    }
}

pub struct GradCheck {
    pub max_rel_error: f64,
    pub n_checked: usize,
}

fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Compares every analytic parameter gradient, plus the initial-state
/// gradients, against central differences with step `1e-5` on `n_pairs`
/// random `(x, target)` pairs. Train-mode masks and a random initial state
/// are drawn per pair.
pub fn gradient_check(shape: ModelShape, n_pairs: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(shape, seed);
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut n_checked = 0;

    for pair in 0..n_pairs {
        let x = Array2::from_shape_fn((1, shape.input), |_| rng.random_range(0.0..1.0));
        let y = Array2::from_shape_fn((1, shape.output), |_| rng.random_range(0.0..1.0));
        let (h0, c0) = if pair % 2 == 0 {
            (Array2::zeros((1, shape.hidden)), Array2::zeros((1, shape.hidden)))
        } else {
            (
                Array2::from_shape_fn((1, shape.hidden), |_| rng.random_range(-0.5..0.5)),
                Array2::from_shape_fn((1, shape.hidden), |_| rng.random_range(-0.5..0.5)),
            )
        };
        let keep = 1.0 / (1.0 - shape.dropout);
        let mut mask = |n| Array2::from_shape_fn((1, n), |_| if rng.random::<f64>() < shape.dropout { 0.0 } else { keep });
        let (m1, m2) = (mask(shape.hidden), mask(shape.dense));

        let loss = |p: &ModelParams, h0: &Array2<f64>, c0: &Array2<f64>| {
            let c = forward_from(p, x.view(), h0.view(), c0.view(), Mode::Masks(m1.clone(), m2.clone())).unwrap();
            batch_mse(&c.y, y.view()).unwrap().0
        };

        let cache = forward_from(&params, x.view(), h0.view(), c0.view(), Mode::Masks(m1.clone(), m2.clone())).unwrap();
        let (_, dy) = batch_mse(&cache.y, y.view()).unwrap();
        let grads = backward(&params, &cache, dy.view()).unwrap();

        let analytic: Vec<Vec<f64>> = grads.params.tensors().iter().map(|t| t.1.to_vec()).collect();
        for (ti, g) in analytic.iter().enumerate() {
            for (k, &a) in g.iter().enumerate() {
                let orig = params.tensors_mut()[ti][k];
                params.tensors_mut()[ti][k] = orig + h;
                let up = loss(&params, &h0, &c0);
                params.tensors_mut()[ti][k] = orig - h;
                let dn = loss(&params, &h0, &c0);
                params.tensors_mut()[ti][k] = orig;
                worst = worst.max(rel_error(a, (up - dn) / (2.0 * h)));
                n_checked += 1;
            }
        }

        for (state, is_h) in [(&h0, true), (&c0, false)] {
            let analytic = if is_h { &grads.d_h0 } else { &grads.d_c0 };
            for k in 0..shape.hidden {
                let mut up = state.clone();
                up[[0, k]] += h;
                let mut dn = state.clone();
                dn[[0, k]] -= h;
                let (lu, ld) = if is_h {
                    (loss(&params, &up, &c0), loss(&params, &dn, &c0))
                } else {
                    (loss(&params, &h0, &up), loss(&params, &h0, &dn))
                };
                worst = worst.max(rel_error(analytic[[0, k]], (lu - ld) / (2.0 * h)));
                n_checked += 1;
            }
        }
    }
    GradCheck {
        max_rel_error: worst,
        n_checked,
    }
}
