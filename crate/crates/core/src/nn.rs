//! Small numeric building blocks shared by the encoder and the heads:
//! named parameter tensors, initialisation, softmax, layer norm, GELU and
//! dropout masks.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// A borrowed view of one named parameter tensor.
#[derive(Debug)]
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

#[derive(Debug)]
pub struct TensorMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

/// Anything that owns a fixed, ordered list of named `f64` tensors. Used by
/// the optimiser, checkpoints and gradient checks.
pub trait Parameters {
    fn tensors(&self) -> Vec<TensorRef<'_>>;
    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.data.fill(value);
        }
    }

    /// `self += other`, tensor by tensor. Both must have the same layout.
    fn add_assign(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            debug_assert_eq!(a.name, b.name);
            for (x, y) in a.data.iter_mut().zip(b.data) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= factor);
        }
    }
}

pub(crate) fn mat_ref<'a>(name: impl Into<String>, m: &'a Array2<f64>) -> TensorRef<'a> {
    TensorRef {
        name: name.into(),
        shape: m.shape().to_vec(),
        data: m.as_slice().expect("parameters are contiguous"),
    }
}

pub(crate) fn vec_ref<'a>(name: impl Into<String>, v: &'a Array1<f64>) -> TensorRef<'a> {
    TensorRef {
        name: name.into(),
        shape: v.shape().to_vec(),
        data: v.as_slice().expect("parameters are contiguous"),
    }
}

pub(crate) fn mat_mut<'a>(name: impl Into<String>, m: &'a mut Array2<f64>) -> TensorMut<'a> {
    TensorMut {
        name: name.into(),
        shape: m.shape().to_vec(),
        data: m.as_slice_mut().expect("parameters are contiguous"),
    }
}

pub(crate) fn vec_mut<'a>(name: impl Into<String>, v: &'a mut Array1<f64>) -> TensorMut<'a> {
    TensorMut {
        name: name.into(),
        shape: v.shape().to_vec(),
        data: v.as_slice_mut().expect("parameters are contiguous"),
    }
}

/// Normal(0, std) truncated at two standard deviations.
pub fn truncated_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let normal = Normal::new(0.0, std).expect("std is positive");
    Array2::from_shape_simple_fn((rows, cols), || loop {
        let x: f64 = normal.sample(rng);
        if x.abs() <= 2.0 * std {
            break x;
        }
    })
}

/// Row-wise softmax.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
    out
}

/// Backward of a row-wise softmax: `dz = p * (dp - <dp, p>)`.
pub fn softmax_rows_backward(probs: &Array2<f64>, d_probs: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(probs.raw_dim());
    for ((p, dp), mut o) in probs.rows().into_iter().zip(d_probs.rows()).zip(out.rows_mut()) {
        let dot = p.dot(&dp);
        for ((o, &pi), &dpi) in o.iter_mut().zip(p).zip(dp) {
            *o = pi * (dpi - dot);
        }
    }
    out
}

pub const LAYER_NORM_EPS: f64 = 1e-12;

/// Cached intermediates of a layer norm.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normed: Array2<f64>,
    pub rstd: Array1<f64>,
}

pub fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, LayerNormCache) {
    let d = x.ncols() as f64;
    let mut normed = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in normed.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        let var = row.fold(0.0, |acc, &v| acc + (v - mean) * (v - mean)) / d;
        *r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let rr = *r;
        row.mapv_inplace(|v| (v - mean) * rr);
    }
    let out = &normed * gain + bias;
    (out, LayerNormCache { normed, rstd })
}

/// Returns `(dx, dgain, dbias)`.
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gain: &Array1<f64>,
    dy: &Array2<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let d = dy.ncols() as f64;
    let dgain = (dy * &cache.normed).sum_axis(Axis(0));
    let dbias = dy.sum_axis(Axis(0));
    let dxhat = dy * gain;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (((g, xh), r), mut out) in dxhat
        .rows()
        .into_iter()
        .zip(cache.normed.rows())
        .zip(cache.rstd.iter())
        .zip(dx.rows_mut())
    {
        let mean_g = g.sum() / d;
        let mean_gx = g.dot(&xh) / d;
        for ((o, &gi), &xi) in out.iter_mut().zip(g).zip(xh) {
            *o = r * (gi - mean_g - xi * mean_gx);
        }
    }
    (dx, dgain, dbias)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// tanh approximation of GELU.
pub fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

pub fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

/// Inverted-dropout scale mask: each entry is 0 with probability `rate`,
/// otherwise `1 / (1 - rate)`.
pub fn dropout_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rate: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < rate { 0.0 } else { keep })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
