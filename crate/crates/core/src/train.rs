//! Mini-batch training with deterministic, order-fixed gradient reduction.

use std::collections::BTreeMap;

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EntitySpan;
use crate::decode::MatchOrder;
use crate::encoder::{EncoderConfig, Mode};
use crate::error::{Error, Result};
use crate::eval::{score, EvalReport};
use crate::heads::HeadVariant;
use crate::model::{Head, Model, TaskMode};
use crate::mrc::{MrcExample, Origin, SeqConfig, SeqOrder, Triple, Truncation, Vocab};
use crate::nn::{rng, Parameters};
use crate::optim::{Adam, AdamConfig};
use crate::query::QueryStrategy;

/// Every knob of a run. Missing fields in a JSON config take the desk-scale
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TaskMode,
    pub seq_len: usize,
    pub order: SeqOrder,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub query_strategy: QueryStrategy,
    pub query_seed: u64,
    pub head_variant: HeadVariant,
    pub head_bias: bool,
    pub match_order: MatchOrder,
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    pub min_count: usize,
    pub optimizer: AdamConfig,
    /// Stop as soon as dev F1 reaches this value.
    pub stop_at_dev_f1: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TaskMode::Mrc,
            seq_len: 64,
            order: SeqOrder::ContextFirst,
            epochs: 50,
            batch_size: 8,
            seed: 42,
            query_strategy: QueryStrategy::K(3),
            query_seed: 42,
            head_variant: HeadVariant::Conditioned,
            head_bias: true,
            match_order: MatchOrder::EndDriven,
            layers: 2,
            model_dim: 64,
            heads: 4,
            ffn_dim: 256,
            dropout: 0.1,
            min_count: 1,
            optimizer: AdamConfig::default(),
            stop_at_dev_f1: None,
        }
    }
}

impl TrainConfig {
    /// BERT-base sized BC5CDR-Chem fine-tuning settings (for
    /// reference; far beyond desk scale).
    pub fn bert_base_bc5cdr_chem() -> Self {
        TrainConfig {
            seq_len: 256,
            epochs: 10,
            batch_size: 16,
            layers: 12,
            model_dim: 768,
            heads: 12,
            ffn_dim: 3072,
            optimizer: AdamConfig {
                learning_rate: 3e-5,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            layers: self.layers,
            model_dim: self.model_dim,
            heads: self.heads,
            ffn_dim: self.ffn_dim,
            vocab_size,
            max_positions: self.seq_len,
            dropout: self.dropout,
        }
    }

    pub fn seq_config(&self) -> SeqConfig {
        SeqConfig {
            seq_len: self.seq_len,
            order: self.order,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len < 4 || self.batch_size == 0 || self.optimizer.learning_rate <= 0.0 {
            return Err(Error::Config(
                "seq_len must be at least 4, batch_size and learning_rate positive".into(),
            ));
        }
        self.encoder_config(4).validate()
    }

    pub fn init_model(&self, vocab_size: usize) -> Model {
        let cfg = self.encoder_config(vocab_size);
        let mut model = match self.mode {
            TaskMode::Mrc => Model::new_mrc(cfg, self.head_variant, self.seed),
            TaskMode::BioBaseline => Model::new_bio(cfg, self.seed),
        };
        if let Head::Span(p) = &mut model.head {
            p.use_bias = self.head_bias;
        }
        model
    }
}

/// Encodes triples for the given task. Labelling drops the query.
pub fn encode_triples(
    triples: &[Triple],
    vocab: &Vocab,
    seq: &SeqConfig,
    mode: TaskMode,
) -> Result<(Vec<MrcExample>, Truncation)> {
    let encoded = triples
        .par_iter()
        .map(|t| match mode {
            TaskMode::Mrc => t.encode(vocab, seq),
            TaskMode::BioBaseline => t.encode_context_only(vocab, seq),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Truncation::default();
    let examples = encoded
        .into_iter()
        .map(|e| {
            total.tokens_dropped += e.truncation.tokens_dropped;
            total.spans_dropped += e.truncation.spans_dropped;
            e.example
        })
        .collect();
    Ok((examples, total))
}

/// Predicted spans for every example, in input order.
pub fn predict_all(model: &Model, examples: &[MrcExample], order: MatchOrder) -> Result<Vec<Vec<EntitySpan>>> {
    examples.par_iter().map(|ex| model.predict(ex, order)).collect()
}

/// Scores a model on encoded examples against their (post-truncation) gold.
pub fn evaluate_model(model: &Model, examples: &[MrcExample], order: MatchOrder) -> Result<EvalReport> {
    let predicted = predict_all(model, examples, order)?;
    let mut gold: BTreeMap<Origin, Vec<EntitySpan>> = BTreeMap::new();
    let mut pred: BTreeMap<Origin, Vec<EntitySpan>> = BTreeMap::new();
    for (ex, p) in examples.iter().zip(predicted) {
        gold.entry(ex.origin.clone()).or_default().extend(ex.gold_spans.iter().cloned());
        pred.entry(ex.origin.clone()).or_default().extend(p);
    }
    score(&gold, &pred)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub dev_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best dev F1 (the last ones without a dev set).
    pub best: Model,
    pub best_epoch: usize,
    pub best_dev: Option<EvalReport>,
    pub log: Vec<EpochLog>,
    pub steps: usize,
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finaliser over a combined word
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Averaged loss and gradient over one batch. Per-example work runs in
/// parallel; the reduction is sequential in batch order.
pub fn batch_gradient(model: &Model, batch: &[&MrcExample], seeds: &[u64]) -> Result<(f64, Model)> {
    let len = batch.iter().map(|e| e.active_len()).max().unwrap_or(0);
    let outputs = batch
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(ex, &seed)| model.loss_and_grads(ex, len, Mode::Train { seed }))
        .collect::<Result<Vec<_>>>()?;
    let mut grads = model.zeros_like();
    let mut loss = 0.0;
    for out in &outputs {
        loss += out.loss;
        grads.add_assign(&out.grads);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok((loss / n, grads))
}

/// Trains from a fresh initialisation.
pub fn train(cfg: &TrainConfig, vocab_size: usize, train: &[MrcExample], dev: &[MrcExample]) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = cfg.init_model(vocab_size);
    train_from(cfg, model, train, dev)
}

pub fn train_from(cfg: &TrainConfig, mut model: Model, train: &[MrcExample], dev: &[MrcExample]) -> Result<TrainOutcome> {
    let mut opt = Adam::new(cfg.optimizer, &model);
    let mut log = Vec::new();

    let dev_f1 = |m: &Model| -> Result<Option<EvalReport>> {
        if dev.is_empty() {
            Ok(None)
        } else {
            evaluate_model(m, dev, cfg.match_order).map(Some)
        }
    };

    let initial = dev_f1(&model)?;
    log.push(EpochLog {
        epoch: 0,
        train_loss: None,
        dev_f1: initial.map(|r| r.f1),
    });
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_dev = initial;
    let reached = |r: &Option<EvalReport>| matches!((cfg.stop_at_dev_f1, r), (Some(t), Some(r)) if r.f1 >= t);
    if reached(&initial) || train.is_empty() {
        return Ok(TrainOutcome {
            best,
            best_epoch,
            best_dev,
            log,
            steps: 0,
        });
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng(mix(cfg.seed, epoch as u64)));
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&MrcExample> = chunk.iter().map(|&i| &train[i]).collect();
            let seeds: Vec<u64> = chunk
                .iter()
                .map(|&i| mix(mix(cfg.seed, epoch as u64), (b as u64) << 32 | i as u64))
                .collect();
            let (loss, grads) = batch_gradient(&model, &batch, &seeds)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss or gradient at epoch {epoch}, batch {b} (loss {loss})"
                )));
            }
            opt.update(&mut model, &grads);
            epoch_loss += loss * chunk.len() as f64;
        }
        let train_loss = epoch_loss / train.len() as f64;
        let report = dev_f1(&model)?;
        info!(
            "epoch {epoch}: train loss {train_loss:.6}{}",
            report.map(|r| format!(", dev F1 {:.4}", r.f1)).unwrap_or_default()
        );
        log.push(EpochLog {
            epoch,
            train_loss: Some(train_loss),
            dev_f1: report.map(|r| r.f1),
        });
        let improved = match (report, best_dev) {
            (Some(r), Some(b)) => r.f1 > b.f1,
            (Some(_), None) => true,
            (None, _) => true,
        };
        if improved {
            best = model.clone();
            best_epoch = epoch;
            best_dev = report;
        }
        if reached(&report) {
            break;
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_dev,
        log,
        steps: opt.steps(),
    })
}
