//! Span heads over the context rows of `H`.
//!
//! The start head is an affine map of each row to two logits. The end head
//! either sees the row concatenated with the row-wise softmax of the start
//! logits (`Conditioned`) or the row alone (`Ablation`). Training uses the
//! mean of the two token-averaged cross-entropies.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{mat_mut, mat_ref, rng, softmax_rows, softmax_rows_backward, truncated_normal, vec_mut, vec_ref};
use crate::nn::{Parameters, TensorMut, TensorRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadVariant {
    /// End head reads `[H_i ; softmax(L_start)_i]`.
    Conditioned,
    /// End head reads `H_i` only.
    Ablation,
}

impl HeadVariant {
    pub fn end_input_dim(self, model_dim: usize) -> usize {
        match self {
            HeadVariant::Conditioned => model_dim + 2,
            HeadVariant::Ablation => model_dim,
        }
    }
}

impl std::str::FromStr for HeadVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditioned" => Ok(HeadVariant::Conditioned),
            "ablation" => Ok(HeadVariant::Ablation),
            _ => Err(Error::Config(format!("unknown head variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanHeadParams {
    pub w_start: Array2<f64>,
    pub b_start: Array1<f64>,
    pub w_end: Array2<f64>,
    pub b_end: Array1<f64>,
    pub variant: HeadVariant,
    pub use_bias: bool,
}

impl SpanHeadParams {
    pub fn zeros(model_dim: usize, variant: HeadVariant) -> Self {
        SpanHeadParams {
            w_start: Array2::zeros((model_dim, 2)),
            b_start: Array1::zeros(2),
            w_end: Array2::zeros((variant.end_input_dim(model_dim), 2)),
            b_end: Array1::zeros(2),
            variant,
            use_bias: true,
        }
    }

    pub fn init(model_dim: usize, variant: HeadVariant, seed: u64) -> Self {
        let mut r = rng(seed);
        let mut p = Self::zeros(model_dim, variant);
        p.w_start = truncated_normal(&mut r, model_dim, 2, 0.02);
        p.w_end = truncated_normal(&mut r, variant.end_input_dim(model_dim), 2, 0.02);
        p
    }

    pub fn model_dim(&self) -> usize {
        self.w_start.nrows()
    }
}

impl Parameters for SpanHeadParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        vec![
            mat_ref("w_start", &self.w_start),
            vec_ref("b_start", &self.b_start),
            mat_ref("w_end", &self.w_end),
            vec_ref("b_end", &self.b_end),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        vec![
            mat_mut("w_start", &mut self.w_start),
            vec_mut("b_start", &mut self.b_start),
            mat_mut("w_end", &mut self.w_end),
            vec_mut("b_end", &mut self.b_end),
        ]
    }
}

/// Start and end logits, one row per context token.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanLogits {
    pub start: Array2<f64>,
    pub end: Array2<f64>,
}

fn affine(x: ArrayView2<f64>, w: &Array2<f64>, b: &Array1<f64>, use_bias: bool) -> Array2<f64> {
    let out = x.dot(w);
    if use_bias {
        out + b
    } else {
        out
    }
}

/// `L_start = H W_start + b_start` over context rows.
pub fn start_logits(h_ctx: ArrayView2<f64>, params: &SpanHeadParams) -> Array2<f64> {
    affine(h_ctx, &params.w_start, &params.b_start, params.use_bias)
}

fn end_input(h_ctx: ArrayView2<f64>, variant: HeadVariant, l_start: &Array2<f64>) -> Array2<f64> {
    match variant {
        HeadVariant::Conditioned => concatenate![Axis(1), h_ctx, softmax_rows(l_start.view())],
        HeadVariant::Ablation => h_ctx.to_owned(),
    }
}

/// End logits; `Conditioned` concatenates `softmax(L_start)` to each row.
pub fn end_logits(h_ctx: ArrayView2<f64>, params: &SpanHeadParams, l_start: &Array2<f64>) -> Result<Array2<f64>> {
    let want = params.variant.end_input_dim(h_ctx.ncols());
    if params.w_end.nrows() != want {
        return Err(Error::Shape(format!(
            "{:?} end head expects {want} input rows, weights have {}",
            params.variant,
            params.w_end.nrows()
        )));
    }
    if params.variant == HeadVariant::Conditioned && l_start.dim() != (h_ctx.nrows(), 2) {
        return Err(Error::Shape(format!(
            "start logits are {:?}, expected ({}, 2)",
            l_start.dim(),
            h_ctx.nrows()
        )));
    }
    let z = end_input(h_ctx, params.variant, l_start);
    Ok(affine(z.view(), &params.w_end, &params.b_end, params.use_bias))
}

pub fn span_logits(h_ctx: ArrayView2<f64>, params: &SpanHeadParams) -> Result<SpanLogits> {
    let start = start_logits(h_ctx, params);
    let end = end_logits(h_ctx, params, &start)?;
    Ok(SpanLogits { start, end })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss_start: f64,
    pub loss_end: f64,
    pub loss: f64,
    pub token_count: usize,
}

/// Token-averaged multi-class cross-entropy over unmasked rows. Returns the
/// loss and `(softmax - onehot) / count` as its gradient.
pub(crate) fn masked_cross_entropy(logits: &Array2<f64>, targets: &[usize], mask: &[u8]) -> Result<(f64, Array2<f64>)> {
    if targets.len() != logits.nrows() || mask.len() != logits.nrows() {
        return Err(Error::Shape(format!(
            "{} logit rows, {} targets, {} mask entries",
            logits.nrows(),
            targets.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m == 1).count();
    if count == 0 {
        return Err(Error::EmptyLoss);
    }
    let probs = softmax_rows(logits.view());
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for (i, row) in logits.rows().into_iter().enumerate() {
        if mask[i] == 0 {
            continue;
        }
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let lse = max + row.mapv(|x| (x - max).exp()).sum().ln();
        total += lse - row[targets[i]];
        let mut g = grad.row_mut(i);
        g.assign(&probs.row(i));
        g[targets[i]] -= 1.0;
        g /= count as f64;
    }
    Ok((total / count as f64, grad))
}

/// Gradients of the total loss w.r.t. both logit matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitGrads {
    pub start: Array2<f64>,
    pub end: Array2<f64>,
}

/// `loss = (CE(L_start, Y_start) + CE(L_end, Y_end)) / 2`, each CE averaged
/// over unmasked tokens. The returned gradients are those of `loss`.
pub fn span_loss(
    logits: &SpanLogits,
    y_start: &[u8],
    y_end: &[u8],
    mask: &[u8],
) -> Result<(LossReport, LogitGrads)> {
    let ts: Vec<usize> = y_start.iter().map(|&b| b as usize).collect();
    let te: Vec<usize> = y_end.iter().map(|&b| b as usize).collect();
    let (loss_start, gs) = masked_cross_entropy(&logits.start, &ts, mask)?;
    let (loss_end, ge) = masked_cross_entropy(&logits.end, &te, mask)?;
    let report = LossReport {
        loss_start,
        loss_end,
        loss: (loss_start + loss_end) / 2.0,
        token_count: mask.iter().filter(|&&m| m == 1).count(),
    };
    Ok((
        report,
        LogitGrads {
            start: gs * 0.5,
            end: ge * 0.5,
        },
    ))
}

/// Reverse pass through both heads. Returns parameter gradients and
/// d(loss)/d(H) for the context rows.
pub fn heads_backward(
    h_ctx: ArrayView2<f64>,
    params: &SpanHeadParams,
    logits: &SpanLogits,
    grads: &LogitGrads,
) -> (SpanHeadParams, Array2<f64>) {
    let d = h_ctx.ncols();
    let mut g = SpanHeadParams::zeros(d, params.variant);
    g.use_bias = params.use_bias;

    let z = end_input(h_ctx, params.variant, &logits.start);
    g.w_end = z.t().dot(&grads.end);
    let dz = grads.end.dot(&params.w_end.t());
    let mut dh = dz.slice(s![.., ..d]).to_owned();

    let mut d_start = grads.start.clone();
    if params.variant == HeadVariant::Conditioned {
        let probs = z.slice(s![.., d..]).to_owned();
        let dp = dz.slice(s![.., d..]).to_owned();
        d_start += &softmax_rows_backward(&probs, &dp);
    }
    g.w_start = h_ctx.t().dot(&d_start);
    dh += &d_start.dot(&params.w_start.t());
    if params.use_bias {
        g.b_start = d_start.sum_axis(Axis(0));
        g.b_end = grads.end.sum_axis(Axis(0));
    }
    (g, dh)
}
