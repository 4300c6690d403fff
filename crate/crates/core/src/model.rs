//! Encoder plus task head, with loss/gradient and prediction entry points.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::baseline::{bio_backward, bio_decode, bio_logits, bio_loss, bio_targets, BioHeadParams};
use crate::corpus::EntitySpan;
use crate::decode::{decode_example_with, MatchOrder};
use crate::encoder::{backward, forward_example, EncoderConfig, EncoderParams, Mode};
use crate::error::Result;
use crate::heads::{heads_backward, span_logits, span_loss, HeadVariant, SpanHeadParams, SpanLogits};
use crate::mrc::MrcExample;
use crate::nn::{Parameters, TensorMut, TensorRef};

/// Which framing the model is trained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskMode {
    /// Query-conditioned start/end span heads.
    Mrc,
    /// Per-token B/I/O softmax over the context alone.
    BioBaseline,
}

impl std::fmt::Display for TaskMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskMode::Mrc => "mrc",
            TaskMode::BioBaseline => "bio-baseline",
        })
    }
}

impl std::str::FromStr for TaskMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mrc" => Ok(TaskMode::Mrc),
            "bio-baseline" | "bio" => Ok(TaskMode::BioBaseline),
            _ => Err(crate::Error::Config(format!("unknown mode {s:?} (expected mrc or bio-baseline)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Span(SpanHeadParams),
    Bio(BioHeadParams),
}

impl Head {
    pub fn mode(&self) -> TaskMode {
        match self {
            Head::Span(_) => TaskMode::Mrc,
            Head::Bio(_) => TaskMode::BioBaseline,
        }
    }

    fn params(&self) -> &dyn Parameters {
        match self {
            Head::Span(p) => p,
            Head::Bio(p) => p,
        }
    }

    fn params_mut(&mut self) -> &mut dyn Parameters {
        match self {
            Head::Span(p) => p,
            Head::Bio(p) => p,
        }
    }
}

/// Encoder weights and one task head. Also used to hold gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: EncoderConfig,
    pub encoder: EncoderParams,
    pub head: Head,
}

impl Parameters for Model {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = self.encoder.tensors();
        out.extend(self.head.params().tensors().into_iter().map(|mut t| {
            t.name = format!("head.{}", t.name);
            t
        }));
        out
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.head.params_mut().tensors_mut().into_iter().map(|mut t| {
            t.name = format!("head.{}", t.name);
            t
        }));
        out
    }
}

/// Output of one forward/backward pass.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub loss: f64,
    pub grads: Model,
}

impl Model {
    pub fn new_mrc(config: EncoderConfig, variant: HeadVariant, seed: u64) -> Self {
        Model {
            encoder: EncoderParams::init(&config, seed),
            head: Head::Span(SpanHeadParams::init(config.model_dim, variant, seed.wrapping_add(1))),
            config,
        }
    }

    pub fn new_bio(config: EncoderConfig, seed: u64) -> Self {
        Model {
            encoder: EncoderParams::init(&config, seed),
            head: Head::Bio(BioHeadParams::init(config.model_dim, seed.wrapping_add(1))),
            config,
        }
    }

    pub fn mode(&self) -> TaskMode {
        self.head.mode()
    }

    /// A zero-valued copy with the same layout.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    /// Loss and gradients of all parameters on one example, using its
    /// first `len` positions (`len >= example.active_len()`).
    pub fn loss_and_grads(&self, ex: &MrcExample, len: usize, mode: Mode) -> Result<StepOutput> {
        let (hidden, tape) = forward_example(&self.encoder, &self.config, ex, len, mode)?;
        let h_ctx = hidden.context_rows();
        let mask = vec![1u8; ex.context_len()];
        let (loss, head_grads, d_ctx) = match &self.head {
            Head::Span(p) => {
                let logits = span_logits(h_ctx, p)?;
                let (report, lg) = span_loss(&logits, &ex.y_start, &ex.y_end, &mask)?;
                let (g, dh) = heads_backward(h_ctx, p, &logits, &lg);
                (report.loss, Head::Span(g), dh)
            }
            Head::Bio(p) => {
                let logits = bio_logits(h_ctx, p);
                let targets = bio_targets(&ex.gold_spans, ex.context_len())?;
                let (loss, dl) = bio_loss(&logits, &targets, &mask)?;
                let (g, dh) = bio_backward(h_ctx, p, &dl);
                (loss, Head::Bio(g), dh)
            }
        };
        let mut grad_h = Array2::zeros(hidden.values.raw_dim());
        grad_h
            .slice_mut(s![ex.context_range.0..=ex.context_range.1, ..])
            .assign(&d_ctx);
        let enc = backward(&self.encoder, &tape, &grad_h)?;
        Ok(StepOutput {
            loss,
            grads: Model {
                config: self.config,
                encoder: enc.params,
                head: head_grads,
            },
        })
    }

    /// Span logits for an example (MRC mode only).
    pub fn span_logits(&self, ex: &MrcExample) -> Result<SpanLogits> {
        let Head::Span(p) = &self.head else {
            return Err(crate::Error::ModeMismatch("span logits requested from a bio-baseline model".into()));
        };
        let (hidden, _) = forward_example(&self.encoder, &self.config, ex, ex.active_len(), Mode::Eval)?;
        span_logits(hidden.context_rows(), p)
    }

    /// Predicted entities for one example.
    pub fn predict(&self, ex: &MrcExample, order: MatchOrder) -> Result<Vec<EntitySpan>> {
        match &self.head {
            Head::Span(_) => decode_example_with(ex, &self.span_logits(ex)?, order),
            Head::Bio(p) => {
                let (hidden, _) = forward_example(&self.encoder, &self.config, ex, ex.active_len(), Mode::Eval)?;
                let logits = bio_logits(hidden.context_rows(), p);
                Ok(bio_decode(&logits, &ex.origin.entity_type)
                    .into_iter()
                    .map(|s| s.with_surface(&ex.context))
                    .collect())
            }
        }
    }
}
