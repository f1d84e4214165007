//! LSTM → dropout → dense(ReLU) → dropout → linear.
//!
//! Inputs are batched row-wise: a batch of `B` feature vectors is a `B × I`
//! matrix. Every room is a sequence of length one, so a forward pass is a
//! single cell step from the initial state (zero unless given).

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelShape {
    pub input: usize,
    pub hidden: usize,
    pub dense: usize,
    pub output: usize,
    pub dropout: f64,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            input: crate::room::N_FEATURES,
            hidden: 128,
            dense: 2048,
            output: 256,
            dropout: 0.3,
        }
    }
}

/// Gate blocks are stacked in the order input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4H × I`
    pub w_ih: Array2<f64>,
    /// `4H × H`
    pub w_hh: Array2<f64>,
    /// `4H`
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub shape: ModelShape,
    pub lstm: LstmParams,
    /// `D × H`
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
    /// `O × D`
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

pub const TENSOR_NAMES: [&str; 7] = [
    "lstm.w_ih",
    "lstm.w_hh",
    "lstm.bias",
    "dense.weight",
    "dense.bias",
    "output.weight",
    "output.bias",
];

impl ModelParams {
    pub fn zeros(shape: ModelShape) -> Self {
        let ModelShape {
            input: i,
            hidden: h,
            dense: d,
            output: o,
            ..
        } = shape;
        ModelParams {
            shape,
            lstm: LstmParams {
                w_ih: Array2::zeros((4 * h, i)),
                w_hh: Array2::zeros((4 * h, h)),
                bias: Array1::zeros(4 * h),
            },
            dense_w: Array2::zeros((d, h)),
            dense_b: Array1::zeros(d),
            out_w: Array2::zeros((o, d)),
            out_b: Array1::zeros(o),
        }
    }

    /// Uniform `±1/√fan_in` weights; forget-gate bias 1, all other biases 0.
    pub fn init(shape: ModelShape, seed: u64) -> Self {
        let mut p = Self::zeros(shape);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |a: &mut Array2<f64>| {
            let bound = 1.0 / (a.ncols() as f64).sqrt();
            a.mapv_inplace(|_| rng.random_range(-bound..=bound));
        };
        fill(&mut p.lstm.w_ih);
        fill(&mut p.lstm.w_hh);
        fill(&mut p.dense_w);
        fill(&mut p.out_w);
        let h = shape.hidden;
        p.lstm.bias.slice_mut(s![h..2 * h]).fill(1.0);
        p
    }

    pub fn tensors(&self) -> [(&'static str, &[f64], Vec<usize>); 7] {
        let t2 = |a: &Array2<f64>| a.shape().to_vec();
        [
            (TENSOR_NAMES[0], self.lstm.w_ih.as_slice().unwrap(), t2(&self.lstm.w_ih)),
            (TENSOR_NAMES[1], self.lstm.w_hh.as_slice().unwrap(), t2(&self.lstm.w_hh)),
            (TENSOR_NAMES[2], self.lstm.bias.as_slice().unwrap(), vec![self.lstm.bias.len()]),
            (TENSOR_NAMES[3], self.dense_w.as_slice().unwrap(), t2(&self.dense_w)),
            (TENSOR_NAMES[4], self.dense_b.as_slice().unwrap(), vec![self.dense_b.len()]),
            (TENSOR_NAMES[5], self.out_w.as_slice().unwrap(), t2(&self.out_w)),
            (TENSOR_NAMES[6], self.out_b.as_slice().unwrap(), vec![self.out_b.len()]),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.lstm.w_ih.as_slice_mut().unwrap(),
            self.lstm.w_hh.as_slice_mut().unwrap(),
            self.lstm.bias.as_slice_mut().unwrap(),
            self.dense_w.as_slice_mut().unwrap(),
            self.dense_b.as_slice_mut().unwrap(),
            self.out_w.as_slice_mut().unwrap(),
            self.out_b.as_slice_mut().unwrap(),
        ]
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.1.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.1.iter().all(|v| v.is_finite()))
    }

    /// Rounds every parameter to the nearest f32, the on-disk precision.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }
}

/// How dropout behaves in a forward pass.
pub enum Mode<'a> {
    /// Dropout off.
    Eval,
    /// Fresh masks drawn from the generator.
    Train(&'a mut ChaCha8Rng),
    /// Caller-supplied masks (`B × H` and `B × D`), already scaled by
    /// `1/(1 − p)` where kept.
    Masks(Array2<f64>, Array2<f64>),
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub x: Array2<f64>,
    pub h0: Array2<f64>,
    pub c0: Array2<f64>,
    /// Post-activation gates `[i | f | g | o]`, `B × 4H`.
    pub gates: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
    pub mask1: Option<Array2<f64>>,
    pub a1: Array2<f64>,
    /// Dense pre-activation.
    pub dense_pre: Array2<f64>,
    pub mask2: Option<Array2<f64>>,
    pub a2: Array2<f64>,
    pub y: Array2<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dropout_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn((rows, cols), || {
        if rng.random::<f64>() < p {
            0.0
        } else {
            keep
        }
    })
}

fn check_finite(a: &Array2<f64>, layer: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer })
    }
}

/// Forward pass from a zero initial state.
pub fn forward(params: &ModelParams, x: ArrayView2<f64>, mode: Mode<'_>) -> Result<ForwardCache> {
    let zeros = Array2::zeros((x.nrows(), params.shape.hidden));
    forward_from(params, x, zeros.view(), zeros.view(), mode)
}

/// Forward pass from an explicit LSTM state `(h0, c0)`.
pub fn forward_from(
    params: &ModelParams,
    x: ArrayView2<f64>,
    h0: ArrayView2<f64>,
    c0: ArrayView2<f64>,
    mode: Mode<'_>,
) -> Result<ForwardCache> {
    let sh = &params.shape;
    let (b, h) = (x.nrows(), sh.hidden);
    if x.ncols() != sh.input {
        return Err(Error::LengthMismatch {
            expected: sh.input,
            got: x.ncols(),
        });
    }

    let mut gates = x.dot(&params.lstm.w_ih.t()) + h0.dot(&params.lstm.w_hh.t());
    gates += &params.lstm.bias;
    for (k, mut block) in gates.axis_chunks_iter_mut(Axis(1), h).enumerate() {
        if k == 2 {
            block.mapv_inplace(f64::tanh);
        } else {
            block.mapv_inplace(sigmoid);
        }
    }
    let gi = gates.slice(s![.., 0..h]);
    let gf = gates.slice(s![.., h..2 * h]);
    let gg = gates.slice(s![.., 2 * h..3 * h]);
    let go = gates.slice(s![.., 3 * h..4 * h]);
    let c = &gf * &c0 + &gi * &gg;
    let tanh_c = c.mapv(f64::tanh);
    let hidden = &go * &tanh_c;
    check_finite(&hidden, "lstm")?;

    let (mask1, mask2) = match mode {
        Mode::Eval => (None, None),
        Mode::Train(rng) => (
            Some(dropout_mask(rng, b, h, sh.dropout)),
            Some(dropout_mask(rng, b, sh.dense, sh.dropout)),
        ),
        Mode::Masks(m1, m2) => {
            if m1.dim() != (b, h) || m2.dim() != (b, sh.dense) {
                return Err(Error::CacheMismatch);
            }
            (Some(m1), Some(m2))
        }
    };

    let a1 = match &mask1 {
        Some(m) => &hidden * m,
        None => hidden.clone(),
    };
    let mut dense_pre = a1.dot(&params.dense_w.t());
    dense_pre += &params.dense_b;
    check_finite(&dense_pre, "dense")?;
    let mut a2 = dense_pre.mapv(|v| v.max(0.0));
    if let Some(m) = &mask2 {
        a2 *= m;
    }
    let mut y = a2.dot(&params.out_w.t());
    y += &params.out_b;
    check_finite(&y, "output")?;

    Ok(ForwardCache {
        x: x.to_owned(),
        h0: h0.to_owned(),
        c0: c0.to_owned(),
        gates,
        tanh_c,
        h: hidden,
        mask1,
        a1,
        dense_pre,
        mask2,
        a2,
        y,
    })
}

/// Parameter gradients plus gradients w.r.t. the initial LSTM state.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ModelParams,
    pub d_h0: Array2<f64>,
    pub d_c0: Array2<f64>,
}

/// Reverse-mode pass through the graph recorded in `cache`; `d_y` is the
/// loss gradient w.r.t. the outputs (`B × O`). Gradients are summed over the
/// batch.
pub fn backward(params: &ModelParams, cache: &ForwardCache, d_y: ArrayView2<f64>) -> Result<Gradients> {
    let sh = &params.shape;
    let h = sh.hidden;
    let b = cache.x.nrows();
    if d_y.dim() != (b, sh.output)
        || cache.x.ncols() != sh.input
        || cache.gates.dim() != (b, 4 * h)
        || cache.a2.dim() != (b, sh.dense)
    {
        return Err(Error::CacheMismatch);
    }

    let mut g = ModelParams::zeros(*sh);

    g.out_w = d_y.t().dot(&cache.a2);
    g.out_b = d_y.sum_axis(Axis(0));
    let mut d_dense = d_y.dot(&params.out_w);
    if let Some(m) = &cache.mask2 {
        d_dense *= m;
    }
    Zip::from(&mut d_dense)
        .and(&cache.dense_pre)
        .for_each(|d, &pre| {
            if pre <= 0.0 {
                *d = 0.0
            }
        });

    g.dense_w = d_dense.t().dot(&cache.a1);
    g.dense_b = d_dense.sum_axis(Axis(0));
    let mut d_h = d_dense.dot(&params.dense_w);
    if let Some(m) = &cache.mask1 {
        d_h *= m;
    }

    let gi = cache.gates.slice(s![.., 0..h]);
    let gf = cache.gates.slice(s![.., h..2 * h]);
    let gg = cache.gates.slice(s![.., 2 * h..3 * h]);
    let go = cache.gates.slice(s![.., 3 * h..4 * h]);
    let d_c = &d_h * &go * &cache.tanh_c.mapv(|t| 1.0 - t * t);

    let mut d_z = Array2::zeros((b, 4 * h));
    Zip::from(d_z.slice_mut(s![.., 0..h]))
        .and(&d_c)
        .and(&gg)
        .and(&gi)
        .for_each(|z, &dc, &g_, &i| *z = dc * g_ * i * (1.0 - i));
    Zip::from(d_z.slice_mut(s![.., h..2 * h]))
        .and(&d_c)
        .and(&cache.c0)
        .and(&gf)
        .for_each(|z, &dc, &c0, &f| *z = dc * c0 * f * (1.0 - f));
    Zip::from(d_z.slice_mut(s![.., 2 * h..3 * h]))
        .and(&d_c)
        .and(&gi)
        .and(&gg)
        .for_each(|z, &dc, &i, &g_| *z = dc * i * (1.0 - g_ * g_));
    Zip::from(d_z.slice_mut(s![.., 3 * h..4 * h]))
        .and(&d_h)
        .and(&cache.tanh_c)
        .and(&go)
        .for_each(|z, &dh, &tc, &o| *z = dh * tc * o * (1.0 - o));

    g.lstm.w_ih = d_z.t().dot(&cache.x);
    g.lstm.w_hh = d_z.t().dot(&cache.h0);
    g.lstm.bias = d_z.sum_axis(Axis(0));
    let d_h0 = d_z.dot(&params.lstm.w_hh);
    let d_c0 = &d_c * &gf;

    Ok(Gradients {
        params: g,
        d_h0,
        d_c0,
    })
}

/// Mean squared error over the elements of one prediction.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            got: pred.len(),
        });
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// `2(pred − target)/n`.
pub fn mse_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            got: pred.len(),
        });
    }
    let n = pred.len() as f64;
    Ok(pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect())
}

/// Mean over rows of the per-row MSE, and its gradient w.r.t. `pred`.
pub fn batch_mse(pred: &Array2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            got: pred.len(),
        });
    }
    let (b, o) = pred.dim();
    let diff = pred - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / (b * o) as f64;
    let grad = diff * (2.0 / (b * o) as f64);
    Ok((loss, grad))
}
