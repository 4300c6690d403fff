//! Sequence-labelling comparator: a per-token softmax over {B, I, O}
//! on top of the same encoder, fed the context alone.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::corpus::{bio_to_spans, repair_labels, spans_to_bio, BioLabel, BioTag, EntitySpan};
use crate::error::Result;
use crate::heads::masked_cross_entropy;
use crate::nn::{mat_mut, mat_ref, rng, truncated_normal, vec_mut, vec_ref, Parameters, TensorMut, TensorRef};

/// Class order of the logit columns.
pub const CLASSES: [BioTag; 3] = [BioTag::B, BioTag::I, BioTag::O];

pub fn class_index(tag: BioTag) -> usize {
    match tag {
        BioTag::B => 0,
        BioTag::I => 1,
        BioTag::O => 2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BioHeadParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl BioHeadParams {
    pub fn zeros(model_dim: usize) -> Self {
        BioHeadParams {
            w: Array2::zeros((model_dim, 3)),
            b: Array1::zeros(3),
        }
    }

    pub fn init(model_dim: usize, seed: u64) -> Self {
        BioHeadParams {
            w: truncated_normal(&mut rng(seed), model_dim, 3, 0.02),
            b: Array1::zeros(3),
        }
    }
}

impl Parameters for BioHeadParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        vec![mat_ref("w_bio", &self.w), vec_ref("b_bio", &self.b)]
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        vec![mat_mut("w_bio", &mut self.w), vec_mut("b_bio", &mut self.b)]
    }
}

/// `N x 3` logits, columns ordered B, I, O.
pub fn bio_logits(h_ctx: ArrayView2<f64>, params: &BioHeadParams) -> Array2<f64> {
    h_ctx.dot(&params.w) + &params.b
}

/// Class targets for the gold spans of one context.
pub fn bio_targets(spans: &[EntitySpan], len: usize) -> Result<Vec<usize>> {
    Ok(spans_to_bio(spans, len)?
        .iter()
        .map(|l| class_index(l.tag()))
        .collect())
}

/// Token-averaged cross-entropy and its gradient w.r.t. the logits.
pub fn bio_loss(logits: &Array2<f64>, targets: &[usize], mask: &[u8]) -> Result<(f64, Array2<f64>)> {
    masked_cross_entropy(logits, targets, mask)
}

/// Returns parameter gradients and d(loss)/d(H) for the context rows.
pub fn bio_backward(h_ctx: ArrayView2<f64>, params: &BioHeadParams, d_logits: &Array2<f64>) -> (BioHeadParams, Array2<f64>) {
    let grads = BioHeadParams {
        w: h_ctx.t().dot(d_logits),
        b: d_logits.sum_axis(Axis(0)),
    };
    (grads, d_logits.dot(&params.w.t()))
}

/// Per-row argmax. Ties resolve to O first, then B.
fn argmax_tag(row: ndarray::ArrayView1<f64>) -> BioTag {
    let mut best = BioTag::O;
    for tag in [BioTag::B, BioTag::I] {
        if row[class_index(tag)] > row[class_index(best)] {
            best = tag;
        }
    }
    best
}

/// Argmax labels, repaired to a valid BIO sequence and collapsed to spans.
pub fn bio_decode(logits: &Array2<f64>, entity_type: &str) -> Vec<EntitySpan> {
    let raw: Vec<BioLabel> = logits
        .rows()
        .into_iter()
        .map(|row| match argmax_tag(row) {
            BioTag::B => BioLabel::begin(entity_type),
            BioTag::I => BioLabel::inside(entity_type),
            BioTag::O => BioLabel::outside(),
        })
        .collect();
    bio_to_spans(&repair_labels(raw).0)
}
