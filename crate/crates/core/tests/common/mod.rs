//! Independent oracles shared by the integration and acceptance tests.
//! Nothing here calls into the code it checks, except to read parameters.
#![allow(dead_code)]

use mrc_ner::corpus::{BioLabel, BioTag, EntitySpan, Sentence};
use mrc_ner::encoder::EncoderConfig;
use mrc_ner::heads::HeadVariant;
use mrc_ner::model::{Head, Model};
use mrc_ner::mrc::MrcExample;
use proptest::prelude::*;

/// Proptest settings without on-disk failure persistence.
pub fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

pub const TYPES: [&str; 3] = ["CHEMICAL", "DISEASE", "GENE"];

/// Scans maximal `B I*` runs of one type.
pub fn scan_runs(labels: &[BioLabel]) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        if labels[i].tag() == BioTag::B {
            let ty = labels[i].entity_type().unwrap().to_string();
            let mut j = i;
            while j + 1 < labels.len() && labels[j + 1].tag() == BioTag::I && labels[j + 1].entity_type() == Some(ty.as_str()) {
                j += 1;
            }
            out.push((i, j, ty));
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Paints spans onto an all-`O` sequence.
pub fn paint(spans: &[(usize, usize, String)], len: usize) -> Vec<BioLabel> {
    let mut labels = vec![BioLabel::outside(); len];
    for (s, e, ty) in spans {
        labels[*s] = BioLabel::begin(ty.as_str());
        for l in &mut labels[s + 1..=*e] {
            *l = BioLabel::inside(ty.as_str());
        }
    }
    labels
}

pub fn triples_of(spans: &[EntitySpan]) -> Vec<(usize, usize, String)> {
    spans.iter().map(|s| (s.start, s.end, s.entity_type.clone())).collect()
}

/// BIO-valid label sequences of length ≤ `max_len` with at most
/// `max_entities` entities. Built token by token: an `I` choice after `O`
/// becomes `O`, and `B`s past the entity budget become `O`.
pub fn valid_bio(max_len: usize, max_entities: usize) -> impl Strategy<Value = Vec<BioLabel>> {
    prop::collection::vec((0u8..3, 0usize..TYPES.len()), 0..=max_len).prop_map(move |choices| {
        let mut out: Vec<BioLabel> = Vec::with_capacity(choices.len());
        let mut entities = 0;
        for (c, t) in choices {
            let prev_type = out.last().and_then(|l| l.entity_type().map(str::to_string));
            let label = match c {
                0 if entities < max_entities => {
                    entities += 1;
                    BioLabel::begin(TYPES[t])
                }
                1 => match prev_type {
                    Some(ty) => BioLabel::inside(ty),
                    None => BioLabel::outside(),
                },
                _ => BioLabel::outside(),
            };
            out.push(label);
        }
        out
    })
}

/// Every subset of `0..n` as a sorted vector.
pub fn subsets(n: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

/// Declarative nearest match: `(s, e)` is emitted iff `s` is the closest
/// start at or before `e` and `e` is the closest end at or after `s`.
pub fn mutual_nearest(starts: &[usize], ends: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for &e in ends {
        let Some(&s) = starts.iter().filter(|&&s| s <= e).max() else {
            continue;
        };
        if ends.iter().filter(|&&x| x >= s).min() == Some(&e) {
            out.push((s, e));
        }
    }
    out
}

/// The greedy rule read literally: each end, ascending, takes the largest
/// not-yet-paired start at or before it. May nest.
pub fn literal_greedy(starts: &[usize], ends: &[usize]) -> Vec<(usize, usize)> {
    let mut free: Vec<usize> = starts.to_vec();
    let mut out = Vec::new();
    for &e in ends {
        if let Some(pos) = free.iter().rposition(|&s| s <= e) {
            out.push((free.remove(pos), e));
        }
    }
    out
}

/// Start-driven reading: each start, ascending, takes the smallest
/// not-yet-paired end at or after it.
pub fn literal_start_driven(starts: &[usize], ends: &[usize]) -> Vec<(usize, usize)> {
    let mut free: Vec<usize> = ends.to_vec();
    let mut out = Vec::new();
    for &s in starts {
        if let Some(pos) = free.iter().position(|&e| e >= s) {
            out.push((s, free.remove(pos)));
        }
    }
    out.sort();
    out
}

pub fn is_flat(pairs: &[(usize, usize)]) -> bool {
    let mut sorted = pairs.to_vec();
    sorted.sort();
    sorted.iter().all(|&(s, e)| s <= e) && sorted.windows(2).all(|w| w[0].1 < w[1].0)
}

// ---------------------------------------------------------------------------
// Reference encoder, written with plain loops over row-major vectors.

type Mat = Vec<Vec<f64>>;

fn get2(a: &ndarray::Array2<f64>) -> Mat {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matmul(x: &Mat, w: &Mat) -> Mat {
    let k = w.len();
    let m = w[0].len();
    x.iter()
        .map(|row| {
            (0..m)
                .map(|j| (0..k).map(|i| row[i] * w[i][j]).sum())
                .collect()
        })
        .collect()
}

fn add_bias(x: &mut Mat, b: &[f64]) {
    for row in x {
        for (v, bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
}

fn layer_norm(x: &Mat, g: &[f64], b: &[f64]) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let r = 1.0 / (var + 1e-12).sqrt();
            row.iter().enumerate().map(|(j, v)| (v - mean) * r * g[j] + b[j]).collect()
        })
        .collect()
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

/// Eval-mode forward: embeddings, pre-norm blocks, final layer norm.
pub fn reference_forward(model: &Model, ids: &[usize], segs: &[usize], mask: &[u8]) -> Mat {
    let cfg: EncoderConfig = model.config;
    let p = &model.encoder;
    let n = ids.len();
    let d = cfg.model_dim;
    let tok = get2(&p.token_emb);
    let pos = get2(&p.pos_emb);
    let seg = get2(&p.seg_emb);
    let mut x: Mat = (0..n)
        .map(|t| (0..d).map(|j| tok[ids[t]][j] + p.emb_bias[j] + pos[t][j] + seg[segs[t]][j]).collect())
        .collect();
    let hd = d / cfg.heads;
    for lp in &p.layers {
        let a = layer_norm(&x, lp.ln1_gain.as_slice().unwrap(), lp.ln1_bias.as_slice().unwrap());
        let mut q = matmul(&a, &get2(&lp.wq));
        add_bias(&mut q, lp.bq.as_slice().unwrap());
        let mut k = matmul(&a, &get2(&lp.wk));
        add_bias(&mut k, lp.bk.as_slice().unwrap());
        let mut v = matmul(&a, &get2(&lp.wv));
        add_bias(&mut v, lp.bv.as_slice().unwrap());
        let mut ctx = vec![vec![0.0; d]; n];
        for h in 0..cfg.heads {
            let cols = h * hd..(h + 1) * hd;
            for i in 0..n {
                let scores: Vec<f64> = (0..n)
                    .map(|j| {
                        if mask[j] == 0 {
                            f64::NEG_INFINITY
                        } else {
                            cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (hd as f64).sqrt()
                        }
                    })
                    .collect();
                let pr = softmax(&scores);
                for c in cols.clone() {
                    ctx[i][c] = (0..n).map(|j| pr[j] * v[j][c]).sum();
                }
            }
        }
        let mut o = matmul(&ctx, &get2(&lp.wo));
        add_bias(&mut o, lp.bo.as_slice().unwrap());
        for i in 0..n {
            for j in 0..d {
                x[i][j] += o[i][j];
            }
        }
        let b = layer_norm(&x, lp.ln2_gain.as_slice().unwrap(), lp.ln2_bias.as_slice().unwrap());
        let mut u = matmul(&b, &get2(&lp.w1));
        add_bias(&mut u, lp.b1.as_slice().unwrap());
        let g: Mat = u.iter().map(|r| r.iter().map(|&z| gelu(z)).collect()).collect();
        let mut f = matmul(&g, &get2(&lp.w2));
        add_bias(&mut f, lp.b2.as_slice().unwrap());
        for i in 0..n {
            for j in 0..d {
                x[i][j] += f[i][j];
            }
        }
    }
    layer_norm(&x, p.final_gain.as_slice().unwrap(), p.final_bias.as_slice().unwrap())
}

fn mean_ce(logits: &Mat, targets: &[usize]) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(targets)
        .map(|(row, &t)| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - row[t]
        })
        .sum();
    total / targets.len() as f64
}

/// Eval-mode loss of `model` on `ex` using the reference forward.
pub fn reference_loss(model: &Model, ex: &MrcExample, len: usize) -> f64 {
    let h = reference_forward(model, &ex.input_ids[..len], &ex.segment_ids[..len], &ex.attention_mask[..len]);
    let (c0, c1) = ex.context_range;
    let ctx: Mat = h[c0..=c1].to_vec();
    match &model.head {
        Head::Span(p) => {
            let mut ls = matmul(&ctx, &get2(&p.w_start));
            if p.use_bias {
                add_bias(&mut ls, p.b_start.as_slice().unwrap());
            }
            let z: Mat = match p.variant {
                HeadVariant::Conditioned => ctx
                    .iter()
                    .zip(&ls)
                    .map(|(r, l)| r.iter().cloned().chain(softmax(l)).collect())
                    .collect(),
                HeadVariant::Ablation => ctx.clone(),
            };
            let mut le = matmul(&z, &get2(&p.w_end));
            if p.use_bias {
                add_bias(&mut le, p.b_end.as_slice().unwrap());
            }
            let ys: Vec<usize> = ex.y_start.iter().map(|&b| b as usize).collect();
            let ye: Vec<usize> = ex.y_end.iter().map(|&b| b as usize).collect();
            (mean_ce(&ls, &ys) + mean_ce(&le, &ye)) / 2.0
        }
        Head::Bio(p) => {
            let mut l = matmul(&ctx, &get2(&p.w));
            add_bias(&mut l, p.b.as_slice().unwrap());
            // B=0, I=1, O=2
            let mut t = vec![2usize; ctx.len()];
            for s in &ex.gold_spans {
                t[s.start] = 0;
                for x in &mut t[s.start + 1..=s.end] {
                    *x = 1;
                }
            }
            mean_ce(&l, &t)
        }
    }
}

/// Sentence whose gold spans are given as `(start, end)` over `words`.
pub fn sentence(words: &[&str], spans: &[(usize, usize)], ty: &str) -> Sentence {
    let triples: Vec<(usize, usize, String)> = spans.iter().map(|&(s, e)| (s, e, ty.to_string())).collect();
    Sentence::new("t", 0, words.iter().copied(), paint(&triples, words.len()))
}

// ---------------------------------------------------------------------------
// Finite differences.

use mrc_ner::encoder::Mode;
use mrc_ner::nn::Parameters;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Replaces every weight with a draw large enough that no gradient is
/// negligible; gains stay near one.
pub fn randomize(model: &mut Model, seed: u64) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    for t in model.tensors_mut() {
        let gain = t.name.contains("gain");
        for x in t.data.iter_mut() {
            *x = if gain {
                1.0 + r.random_range(-0.3..0.3)
            } else {
                r.random_range(-0.5..0.5)
            };
        }
    }
}

#[derive(Debug, Clone)]
pub struct FdTensor {
    pub name: String,
    pub checked: usize,
    pub max_rel: f64,
    /// (flat index, analytic, numeric) at the worst coordinate.
    pub worst: (usize, f64, f64),
}

/// Floor for the relative-error denominator. A central difference carries
/// round-off of about `eps * |loss| / h`, roughly 2e-11 at h = 1e-5, so
/// gradients that are structurally zero (key biases under softmax shift
/// invariance, unused embedding rows) read as 1e-11 noise. Below the floor
/// the check is effectively absolute at 1e-10.
pub const FD_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Checks `per_tensor` sampled coordinates of every tensor (all of them when
/// the tensor is smaller) with step `h`.
pub fn finite_difference(model: &Model, ex: &MrcExample, len: usize, mode: Mode, per_tensor: usize, h: f64, seed: u64) -> Vec<FdTensor> {
    let grads = model.loss_and_grads(ex, len, mode).unwrap().grads;
    let analytic: Vec<(String, Vec<f64>)> = grads.tensors().into_iter().map(|t| (t.name, t.data.to_vec())).collect();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut out = Vec::new();
    for (ti, (name, g)) in analytic.iter().enumerate() {
        let coords: Vec<usize> = if g.len() <= per_tensor {
            (0..g.len()).collect()
        } else {
            rand::seq::index::sample(&mut r, g.len(), per_tensor).into_vec()
        };
        let mut res = FdTensor {
            name: name.clone(),
            checked: coords.len(),
            max_rel: 0.0,
            worst: (0, 0.0, 0.0),
        };
        for &c in &coords {
            let orig = probe.tensors()[ti].data[c];
            let mut eval = |v: f64| {
                probe.tensors_mut()[ti].data[c] = v;
                probe.loss_and_grads(ex, len, mode).unwrap().loss
            };
            let plus = eval(orig + h);
            let minus = eval(orig - h);
            eval(orig);
            let numeric = (plus - minus) / (2.0 * h);
            let rel = relative_error(g[c], numeric);
            if rel > res.max_rel || res.checked == 0 {
                res.max_rel = rel;
                res.worst = (c, g[c], numeric);
            }
        }
        out.push(res);
    }
    out
}
