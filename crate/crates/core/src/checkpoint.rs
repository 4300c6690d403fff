//! Versioned JSON checkpoint: configuration, vocabulary, encoder tensors
//! and a separate head section tagged with the head variant.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::BioHeadParams;
use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::heads::{HeadVariant, SpanHeadParams};
use crate::model::{Head, Model, TaskMode};
use crate::mrc::{SeqConfig, Vocab};
use crate::nn::{Parameters, TensorRef};

pub const FORMAT: &str = "mrc-ner-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl From<TensorRef<'_>> for StoredTensor {
    fn from(t: TensorRef<'_>) -> Self {
        StoredTensor {
            name: t.name,
            shape: t.shape,
            data: t.data.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSection {
    pub mode: TaskMode,
    /// Present for span heads.
    pub variant: Option<HeadVariant>,
    pub use_bias: bool,
    pub tensors: Vec<StoredTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub encoder_config: EncoderConfig,
    pub seq: SeqConfig,
    pub vocab: Vocab,
    pub encoder: Vec<StoredTensor>,
    pub head: HeadSection,
}

fn load_into(dst: &mut dyn Parameters, src: &[StoredTensor], section: &str) -> Result<()> {
    let slots = dst.tensors_mut();
    if slots.len() != src.len() {
        return Err(Error::Shape(format!(
            "{section}: checkpoint has {} tensors, model expects {}",
            src.len(),
            slots.len()
        )));
    }
    for (slot, stored) in slots.into_iter().zip(src) {
        if slot.name != stored.name || slot.shape != stored.shape || stored.data.len() != slot.data.len() {
            return Err(Error::Shape(format!(
                "{section}: expected {} {:?}, found {} {:?}",
                slot.name, slot.shape, stored.name, stored.shape
            )));
        }
        slot.data.copy_from_slice(&stored.data);
    }
    Ok(())
}

impl Checkpoint {
    pub fn from_model(model: &Model, seq: SeqConfig, vocab: &Vocab) -> Self {
        let (variant, use_bias, tensors) = match &model.head {
            Head::Span(p) => (Some(p.variant), p.use_bias, p.tensors()),
            Head::Bio(p) => (None, true, p.tensors()),
        };
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            encoder_config: model.config,
            seq,
            vocab: vocab.clone(),
            encoder: model.encoder.tensors().into_iter().map(StoredTensor::from).collect(),
            head: HeadSection {
                mode: model.mode(),
                variant,
                use_bias,
                tensors: tensors.into_iter().map(StoredTensor::from).collect(),
            },
        }
    }

    pub fn mode(&self) -> TaskMode {
        self.head.mode
    }

    pub fn to_model(&self) -> Result<Model> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{} (expected {FORMAT} v{VERSION})",
                self.format, self.version
            )));
        }
        let cfg = self.encoder_config;
        cfg.validate()?;
        let mut encoder = EncoderParams::zeros(&cfg);
        load_into(&mut encoder, &self.encoder, "encoder")?;
        let head = match (self.head.mode, self.head.variant) {
            (TaskMode::Mrc, Some(variant)) => {
                let mut p = SpanHeadParams::zeros(cfg.model_dim, variant);
                p.use_bias = self.head.use_bias;
                load_into(&mut p, &self.head.tensors, "head")?;
                Head::Span(p)
            }
            (TaskMode::Mrc, None) => return Err(Error::Config("span head section lacks a variant tag".into())),
            (TaskMode::BioBaseline, _) => {
                let mut p = BioHeadParams::zeros(cfg.model_dim);
                load_into(&mut p, &self.head.tensors, "head")?;
                Head::Bio(p)
            }
        };
        Ok(Model {
            config: cfg,
            encoder,
            head,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
