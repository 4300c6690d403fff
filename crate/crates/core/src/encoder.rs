//! A small pre-norm transformer encoder with hand-written reverse mode.
//!
//! `h0 = W_e[t] + W_b + P[pos] + S[segment]`, followed by `L` blocks of
//! masked multi-head self-attention and a GELU feed-forward network, each
//! wrapped as `x + sublayer(LayerNorm(x))`, and a final layer norm. The
//! output rows form the representation matrix `H`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mrc::MrcExample;
use crate::nn::{
    dropout_mask, gelu, gelu_grad, layer_norm, layer_norm_backward, mat_mut, mat_ref, rng, softmax_rows,
    softmax_rows_backward, truncated_normal, vec_mut, vec_ref, LayerNormCache, Parameters, TensorMut, TensorRef,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    /// Two layers, width 64, four heads, FFN width 256.
    pub fn desk(vocab_size: usize, max_positions: usize) -> Self {
        EncoderConfig {
            layers: 2,
            model_dim: 64,
            heads: 4,
            ffn_dim: 256,
            vocab_size,
            max_positions,
            dropout: 0.1,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.layers == 0 || self.heads == 0 || self.model_dim == 0 || self.ffn_dim == 0 {
            return bad("layers, heads, model_dim and ffn_dim must be positive".into());
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return bad(format!("model_dim {} not divisible by {} heads", self.model_dim, self.heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.vocab_size < 4 || self.max_positions == 0 {
            return bad("vocab_size must cover the special tokens and max_positions must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl LayerParams {
    fn zeros(d: usize, f: usize) -> Self {
        LayerParams {
            ln1_gain: Array1::zeros(d),
            ln1_bias: Array1::zeros(d),
            wq: Array2::zeros((d, d)),
            bq: Array1::zeros(d),
            wk: Array2::zeros((d, d)),
            bk: Array1::zeros(d),
            wv: Array2::zeros((d, d)),
            bv: Array1::zeros(d),
            wo: Array2::zeros((d, d)),
            bo: Array1::zeros(d),
            ln2_gain: Array1::zeros(d),
            ln2_bias: Array1::zeros(d),
            w1: Array2::zeros((d, f)),
            b1: Array1::zeros(f),
            w2: Array2::zeros((f, d)),
            b2: Array1::zeros(d),
        }
    }
}

/// All encoder weights. The same type holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub token_emb: Array2<f64>,
    pub emb_bias: Array1<f64>,
    pub pos_emb: Array2<f64>,
    pub seg_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub final_gain: Array1<f64>,
    pub final_bias: Array1<f64>,
}

impl EncoderParams {
    pub fn zeros(cfg: &EncoderConfig) -> Self {
        let d = cfg.model_dim;
        EncoderParams {
            token_emb: Array2::zeros((cfg.vocab_size, d)),
            emb_bias: Array1::zeros(d),
            pos_emb: Array2::zeros((cfg.max_positions, d)),
            seg_emb: Array2::zeros((2, d)),
            layers: (0..cfg.layers).map(|_| LayerParams::zeros(d, cfg.ffn_dim)).collect(),
            final_gain: Array1::zeros(d),
            final_bias: Array1::zeros(d),
        }
    }

    /// Truncated-normal(0.02) matrices, zero biases, unit layer-norm gains.
    pub fn init(cfg: &EncoderConfig, seed: u64) -> Self {
        let mut r = rng(seed);
        let d = cfg.model_dim;
        let std = 0.02;
        let mut p = Self::zeros(cfg);
        p.token_emb = truncated_normal(&mut r, cfg.vocab_size, d, std);
        p.pos_emb = truncated_normal(&mut r, cfg.max_positions, d, std);
        p.seg_emb = truncated_normal(&mut r, 2, d, std);
        for layer in &mut p.layers {
            layer.ln1_gain.fill(1.0);
            layer.ln2_gain.fill(1.0);
            layer.wq = truncated_normal(&mut r, d, d, std);
            layer.wk = truncated_normal(&mut r, d, d, std);
            layer.wv = truncated_normal(&mut r, d, d, std);
            layer.wo = truncated_normal(&mut r, d, d, std);
            layer.w1 = truncated_normal(&mut r, d, cfg.ffn_dim, std);
            layer.w2 = truncated_normal(&mut r, cfg.ffn_dim, d, std);
        }
        p.final_gain.fill(1.0);
        p
    }
}

impl Parameters for EncoderParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = vec![
            mat_ref("token_emb", &self.token_emb),
            vec_ref("emb_bias", &self.emb_bias),
            mat_ref("pos_emb", &self.pos_emb),
            mat_ref("seg_emb", &self.seg_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let n = |s: &str| format!("layer{i}.{s}");
            out.extend([
                vec_ref(n("ln1_gain"), &l.ln1_gain),
                vec_ref(n("ln1_bias"), &l.ln1_bias),
                mat_ref(n("wq"), &l.wq),
                vec_ref(n("bq"), &l.bq),
                mat_ref(n("wk"), &l.wk),
                vec_ref(n("bk"), &l.bk),
                mat_ref(n("wv"), &l.wv),
                vec_ref(n("bv"), &l.bv),
                mat_ref(n("wo"), &l.wo),
                vec_ref(n("bo"), &l.bo),
                vec_ref(n("ln2_gain"), &l.ln2_gain),
                vec_ref(n("ln2_bias"), &l.ln2_bias),
                mat_ref(n("w1"), &l.w1),
                vec_ref(n("b1"), &l.b1),
                mat_ref(n("w2"), &l.w2),
                vec_ref(n("b2"), &l.b2),
            ]);
        }
        out.push(vec_ref("final_gain", &self.final_gain));
        out.push(vec_ref("final_bias", &self.final_bias));
        out
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = vec![
            mat_mut("token_emb", &mut self.token_emb),
            vec_mut("emb_bias", &mut self.emb_bias),
            mat_mut("pos_emb", &mut self.pos_emb),
            mat_mut("seg_emb", &mut self.seg_emb),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            let n = |s: &str| format!("layer{i}.{s}");
            out.extend([
                vec_mut(n("ln1_gain"), &mut l.ln1_gain),
                vec_mut(n("ln1_bias"), &mut l.ln1_bias),
                mat_mut(n("wq"), &mut l.wq),
                vec_mut(n("bq"), &mut l.bq),
                mat_mut(n("wk"), &mut l.wk),
                vec_mut(n("bk"), &mut l.bk),
                mat_mut(n("wv"), &mut l.wv),
                vec_mut(n("bv"), &mut l.bv),
                mat_mut(n("wo"), &mut l.wo),
                vec_mut(n("bo"), &mut l.bo),
                vec_mut(n("ln2_gain"), &mut l.ln2_gain),
                vec_mut(n("ln2_bias"), &mut l.ln2_bias),
                mat_mut(n("w1"), &mut l.w1),
                vec_mut(n("b1"), &mut l.b1),
                mat_mut(n("w2"), &mut l.w2),
                vec_mut(n("b2"), &mut l.b2),
            ]);
        }
        out.push(vec_mut("final_gain", &mut self.final_gain));
        out.push(vec_mut("final_bias", &mut self.final_bias));
        out
    }
}

/// Token-level input to the encoder. All three slices have equal length.
#[derive(Debug, Clone, Copy)]
pub struct EncoderInput<'a> {
    pub ids: &'a [usize],
    pub segments: &'a [usize],
    pub mask: &'a [u8],
}

impl<'a> EncoderInput<'a> {
    /// The first `len` positions of an example.
    pub fn from_example(ex: &'a MrcExample, len: usize) -> Self {
        EncoderInput {
            ids: &ex.input_ids[..len],
            segments: &ex.segment_ids[..len],
            mask: &ex.attention_mask[..len],
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Dropout is applied only when training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

/// Encoder output: one row per input position.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenMatrix {
    pub values: Array2<f64>,
    pub context_range: (usize, usize),
}

impl HiddenMatrix {
    pub fn context_rows(&self) -> ArrayView2<'_, f64> {
        self.values.slice(s![self.context_range.0..=self.context_range.1, ..])
    }
}

#[derive(Debug, Clone)]
struct LayerTape {
    ln1: LayerNormCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    attn_drop: Option<Array2<f64>>,
    ln2: LayerNormCache,
    b: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
    ffn_drop: Option<Array2<f64>>,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    ids: Vec<usize>,
    segments: Vec<usize>,
    emb_drop: Option<Array2<f64>>,
    layers: Vec<LayerTape>,
    final_ln: LayerNormCache,
    cfg: EncoderConfig,
}

/// Gradients of all parameters plus the gradient w.r.t. the summed input
/// embeddings `h0`.
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub params: EncoderParams,
    pub input: Array2<f64>,
}

fn check_finite(m: &Array2<f64>, location: impl FnOnce() -> String) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { location: location() })
    }
}

/// Runs the encoder over an example's first `len` positions.
pub fn forward_example(
    params: &EncoderParams,
    cfg: &EncoderConfig,
    ex: &MrcExample,
    len: usize,
    mode: Mode,
) -> Result<(HiddenMatrix, Tape)> {
    let (values, tape) = forward(params, cfg, EncoderInput::from_example(ex, len), mode)?;
    Ok((
        HiddenMatrix {
            values,
            context_range: ex.context_range,
        },
        tape,
    ))
}

pub fn forward(params: &EncoderParams, cfg: &EncoderConfig, input: EncoderInput<'_>, mode: Mode) -> Result<(Array2<f64>, Tape)> {
    let n = input.len();
    let d = cfg.model_dim;
    if input.segments.len() != n || input.mask.len() != n {
        return Err(Error::Shape("ids, segments and mask differ in length".into()));
    }
    if n > cfg.max_positions {
        return Err(Error::Shape(format!("{n} positions exceed max_positions {}", cfg.max_positions)));
    }
    if let Some(&id) = input.ids.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(Error::IdOutOfRange {
            id,
            vocab_size: cfg.vocab_size,
        });
    }
    if let Some(&seg) = input.segments.iter().find(|&&s| s > 1) {
        return Err(Error::Shape(format!("segment id {seg} is not 0 or 1")));
    }

    let (mut r, rate) = match mode {
        Mode::Train { seed } if cfg.dropout > 0.0 => (Some(rng(seed)), cfg.dropout),
        _ => (None, 0.0),
    };
    let mut draw = |rows: usize, cols: usize| r.as_mut().map(|r| dropout_mask(r, rows, cols, rate));

    let mut x = Array2::zeros((n, d));
    for (t, mut row) in x.rows_mut().into_iter().enumerate() {
        row += &params.token_emb.row(input.ids[t]);
        row += &params.emb_bias;
        row += &params.pos_emb.row(t);
        row += &params.seg_emb.row(input.segments[t]);
    }
    let emb_drop = draw(n, d);
    if let Some(m) = &emb_drop {
        x *= m;
    }
    check_finite(&x, || "embeddings".into())?;

    let heads = cfg.heads;
    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let mut tapes = Vec::with_capacity(cfg.layers);
    for (li, lp) in params.layers.iter().enumerate() {
        let (a, ln1) = layer_norm(&x, &lp.ln1_gain, &lp.ln1_bias);
        let q = a.dot(&lp.wq) + &lp.bq;
        let k = a.dot(&lp.wk) + &lp.bk;
        let v = a.dot(&lp.wv) + &lp.bv;
        let mut ctx = Array2::zeros((n, d));
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * hd..(h + 1) * hd];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            for (j, &m) in input.mask.iter().enumerate() {
                if m == 0 {
                    scores.column_mut(j).fill(f64::NEG_INFINITY);
                }
            }
            let p = softmax_rows(scores.view());
            ctx.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        let mut o = ctx.dot(&lp.wo) + &lp.bo;
        let attn_drop = draw(n, d);
        if let Some(m) = &attn_drop {
            o *= m;
        }
        x = x + o;

        let (b, ln2) = layer_norm(&x, &lp.ln2_gain, &lp.ln2_bias);
        let u = b.dot(&lp.w1) + &lp.b1;
        let g = u.mapv(gelu);
        let mut f = g.dot(&lp.w2) + &lp.b2;
        let ffn_drop = draw(n, d);
        if let Some(m) = &ffn_drop {
            f *= m;
        }
        x = x + f;
        check_finite(&x, || format!("layer {li}"))?;

        tapes.push(LayerTape {
            ln1,
            a,
            q,
            k,
            v,
            probs,
            ctx,
            attn_drop,
            ln2,
            b,
            u,
            g,
            ffn_drop,
        });
    }
    let (out, final_ln) = layer_norm(&x, &params.final_gain, &params.final_bias);
    check_finite(&out, || "final layer norm".into())?;
    Ok((
        out,
        Tape {
            ids: input.ids.to_vec(),
            segments: input.segments.to_vec(),
            emb_drop,
            layers: tapes,
            final_ln,
            cfg: *cfg,
        },
    ))
}

/// Reverse pass. `grad_h` is d(loss)/dH with the same shape as the forward
/// output.
pub fn backward(params: &EncoderParams, tape: &Tape, grad_h: &Array2<f64>) -> Result<EncoderGrads> {
    let cfg = &tape.cfg;
    let n = tape.ids.len();
    let d = cfg.model_dim;
    if grad_h.dim() != (n, d) {
        return Err(Error::Shape(format!("grad_h is {:?}, expected ({n}, {d})", grad_h.dim())));
    }
    let mut grads = EncoderParams::zeros(cfg);

    let (mut dx, dg, db) = layer_norm_backward(&tape.final_ln, &params.final_gain, grad_h);
    grads.final_gain = dg;
    grads.final_bias = db;

    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    for (li, (lp, lt)) in params.layers.iter().zip(&tape.layers).enumerate().rev() {
        let gl = &mut grads.layers[li];

        // feed-forward sublayer
        let mut df = dx.clone();
        if let Some(m) = &lt.ffn_drop {
            df *= m;
        }
        gl.w2 = lt.g.t().dot(&df);
        gl.b2 = df.sum_axis(Axis(0));
        let dg = df.dot(&lp.w2.t());
        let du = dg * &lt.u.mapv(gelu_grad);
        gl.w1 = lt.b.t().dot(&du);
        gl.b1 = du.sum_axis(Axis(0));
        let dbn = du.dot(&lp.w1.t());
        let (dxn, dgain, dbias) = layer_norm_backward(&lt.ln2, &lp.ln2_gain, &dbn);
        gl.ln2_gain = dgain;
        gl.ln2_bias = dbias;
        dx += &dxn;

        // attention sublayer
        let mut d_o = dx.clone();
        if let Some(m) = &lt.attn_drop {
            d_o *= m;
        }
        gl.wo = lt.ctx.t().dot(&d_o);
        gl.bo = d_o.sum_axis(Axis(0));
        let dctx = d_o.dot(&lp.wo.t());
        let mut dq = Array2::zeros((n, d));
        let mut dk = Array2::zeros((n, d));
        let mut dv = Array2::zeros((n, d));
        for (h, p) in lt.probs.iter().enumerate() {
            let cols = s![.., h * hd..(h + 1) * hd];
            let dctx_h = dctx.slice(cols);
            let dp = dctx_h.dot(&lt.v.slice(cols).t());
            dv.slice_mut(cols).assign(&p.t().dot(&dctx_h));
            let ds = softmax_rows_backward(p, &dp) * scale;
            dq.slice_mut(cols).assign(&ds.dot(&lt.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&lt.q.slice(cols)));
        }
        gl.wq = lt.a.t().dot(&dq);
        gl.bq = dq.sum_axis(Axis(0));
        gl.wk = lt.a.t().dot(&dk);
        gl.bk = dk.sum_axis(Axis(0));
        gl.wv = lt.a.t().dot(&dv);
        gl.bv = dv.sum_axis(Axis(0));
        let da = dq.dot(&lp.wq.t()) + dk.dot(&lp.wk.t()) + dv.dot(&lp.wv.t());
        let (dxa, dgain, dbias) = layer_norm_backward(&lt.ln1, &lp.ln1_gain, &da);
        gl.ln1_gain = dgain;
        gl.ln1_bias = dbias;
        dx += &dxa;
    }

    if let Some(m) = &tape.emb_drop {
        dx *= m;
    }
    for (t, row) in dx.rows().into_iter().enumerate() {
        let mut te = grads.token_emb.row_mut(tape.ids[t]);
        te += &row;
        let mut pe = grads.pos_emb.row_mut(t);
        pe += &row;
        let mut se = grads.seg_emb.row_mut(tape.segments[t]);
        se += &row;
    }
    grads.emb_bias = dx.sum_axis(Axis(0));
    Ok(EncoderGrads { params: grads, input: dx })
}
