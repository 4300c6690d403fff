//! (Context, Query, Answer) triples and their encoding into model-ready
//! sequences: `[CLS] context [SEP] query [SEP] [PAD]...` with segment ids,
//! an attention mask, and start/end target bits over the context.

use std::collections::{BTreeMap, HashMap};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntitySpan, Sentence};
use crate::error::{Error, Result};
use crate::query::QuerySpec;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Word-level vocabulary. Ids 0..4 are the special tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, ids }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == SPECIALS.len()
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }
}

/// Builds a vocabulary from context and query tokens. Tokens seen fewer
/// than `min_count` times are left out (they map to `[UNK]`).
pub fn build_vocab<'a, I, J>(contexts: I, queries: J, min_count: usize) -> Vocab
where
    I: IntoIterator<Item = &'a [String]>,
    J: IntoIterator<Item = &'a [String]>,
{
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for tok in contexts.into_iter().chain(queries).flatten() {
        *counts.entry(tok.as_str()).or_default() += 1;
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_count.max(1) && !SPECIALS.contains(&t))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    SPECIALS
        .iter()
        .copied()
        .chain(kept.into_iter().map(|(t, _)| t))
        .map(str::to_string)
        .collect::<Vec<_>>()
        .into()
}

/// Convenience wrapper over [`build_vocab`] for parsed sentences and queries.
pub fn build_vocab_from_sentences(sentences: &[Sentence], queries: &[QuerySpec], min_count: usize) -> Vocab {
    let contexts: Vec<Vec<String>> = sentences
        .iter()
        .map(|s| s.tokens.iter().map(|t| t.text.clone()).collect())
        .collect();
    build_vocab(
        contexts.iter().map(Vec::as_slice),
        queries.iter().map(|q| q.tokens.as_slice()),
        min_count,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqOrder {
    /// `[CLS] context [SEP] query [SEP]`
    #[default]
    ContextFirst,
    /// `[CLS] query [SEP] context [SEP]`
    QueryFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqConfig {
    pub seq_len: usize,
    pub order: SeqOrder,
}

impl Default for SeqConfig {
    fn default() -> Self {
        SeqConfig {
            seq_len: 64,
            order: SeqOrder::ContextFirst,
        }
    }
}

/// Where an example came from. Also the key used for scoring.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Origin {
    pub doc_id: String,
    pub sent_id: usize,
    pub entity_type: String,
}

impl std::fmt::Display for Origin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}/{}", self.doc_id, self.sent_id, self.entity_type)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub start: usize,
    pub end: usize,
}

/// One (Context, Query, Answer) triple, as written to the triples file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub context: Vec<String>,
    pub query: String,
    pub answers: Vec<Answer>,
    pub entity_type: String,
    pub origin: Origin,
}

impl Triple {
    /// Pairs a sentence with the query of one entity type; answers are the
    /// gold spans of that type.
    pub fn new(sentence: &Sentence, query: &QuerySpec) -> Self {
        Triple {
            context: sentence.words().into_iter().map(str::to_string).collect(),
            query: query.text.clone(),
            answers: sentence
                .spans_of_type(&query.entity_type)
                .into_iter()
                .map(|s| Answer {
                    start: s.start,
                    end: s.end,
                })
                .collect(),
            entity_type: query.entity_type.clone(),
            origin: Origin {
                doc_id: sentence.doc_id.clone(),
                sent_id: sentence.sent_id,
                entity_type: query.entity_type.clone(),
            },
        }
    }

    pub fn query_tokens(&self) -> Vec<String> {
        self.query.split_whitespace().map(str::to_string).collect()
    }

    pub fn gold_spans(&self) -> Vec<EntitySpan> {
        self.answers
            .iter()
            .map(|a| EntitySpan::new(a.start, a.end, self.entity_type.clone()).with_surface(&self.context))
            .collect()
    }

    /// Encodes the triple for the span model.
    pub fn encode(&self, vocab: &Vocab, cfg: &SeqConfig) -> Result<Encoded> {
        encode(self, Some(&self.query_tokens()), vocab, cfg)
    }

    /// Encodes the context alone, `[CLS] context [SEP]`, for sequence labelling.
    pub fn encode_context_only(&self, vocab: &Vocab, cfg: &SeqConfig) -> Result<Encoded> {
        encode(self, None, vocab, cfg)
    }
}

/// A fully assembled model input with targets.
#[derive(Debug, Clone, PartialEq)]
pub struct MrcExample {
    pub input_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
    pub attention_mask: Vec<u8>,
    /// Inclusive positions of the first and last context token.
    pub context_range: (usize, usize),
    pub y_start: Vec<u8>,
    pub y_end: Vec<u8>,
    pub gold_spans: Vec<EntitySpan>,
    pub context: Vec<String>,
    pub origin: Origin,
}

impl MrcExample {
    pub fn context_len(&self) -> usize {
        self.context_range.1 + 1 - self.context_range.0
    }

    pub fn context_positions(&self) -> RangeInclusive<usize> {
        self.context_range.0..=self.context_range.1
    }

    /// Number of non-padding positions.
    pub fn active_len(&self) -> usize {
        self.attention_mask.iter().rposition(|&m| m == 1).map_or(0, |p| p + 1)
    }
}

/// What truncation removed from one example.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub tokens_dropped: usize,
    pub spans_dropped: usize,
}

#[derive(Debug, Clone)]
pub struct Encoded {
    pub example: MrcExample,
    pub truncation: Truncation,
}

fn encode(triple: &Triple, query: Option<&[String]>, vocab: &Vocab, cfg: &SeqConfig) -> Result<Encoded> {
    let specials = if query.is_some() { 3 } else { 2 };
    let query_len = query.map_or(0, <[String]>::len);
    if cfg.seq_len < specials + query_len + 1 {
        return Err(Error::Config(format!(
            "seq_len {} cannot hold a {query_len}-token query and any context",
            cfg.seq_len
        )));
    }
    let keep = triple.context.len().min(cfg.seq_len - specials - query_len);
    let gold: Vec<EntitySpan> = triple.gold_spans();
    let (gold_spans, dropped): (Vec<_>, Vec<_>) = gold.into_iter().partition(|s| s.end < keep);
    let truncation = Truncation {
        tokens_dropped: triple.context.len() - keep,
        spans_dropped: dropped.len(),
    };

    let ctx_ids = triple.context[..keep].iter().map(|t| vocab.id(t));
    let mut input_ids = vec![CLS];
    let mut segment_ids = vec![0];
    let context_range;
    match (query, cfg.order) {
        (None, _) => {
            context_range = (1, keep);
            input_ids.extend(ctx_ids);
            input_ids.push(SEP);
            segment_ids.resize(input_ids.len(), 0);
        }
        (Some(q), SeqOrder::ContextFirst) => {
            context_range = (1, keep);
            input_ids.extend(ctx_ids);
            input_ids.push(SEP);
            segment_ids.resize(input_ids.len(), 0);
            input_ids.extend(q.iter().map(|t| vocab.id(t)));
            input_ids.push(SEP);
            segment_ids.resize(input_ids.len(), 1);
        }
        (Some(q), SeqOrder::QueryFirst) => {
            input_ids.extend(q.iter().map(|t| vocab.id(t)));
            input_ids.push(SEP);
            segment_ids.resize(input_ids.len(), 0);
            context_range = (input_ids.len(), input_ids.len() + keep - 1);
            input_ids.extend(ctx_ids);
            input_ids.push(SEP);
            segment_ids.resize(input_ids.len(), 1);
        }
    }
    let used = input_ids.len();
    let mut attention_mask = vec![1u8; used];
    input_ids.resize(cfg.seq_len, PAD);
    segment_ids.resize(cfg.seq_len, 0);
    attention_mask.resize(cfg.seq_len, 0);

    let mut y_start = vec![0u8; keep];
    let mut y_end = vec![0u8; keep];
    for s in &gold_spans {
        y_start[s.start] = 1;
        y_end[s.end] = 1;
    }

    Ok(Encoded {
        example: MrcExample {
            input_ids,
            segment_ids,
            attention_mask,
            context_range,
            y_start,
            y_end,
            gold_spans,
            context: triple.context[..keep].to_vec(),
            origin: triple.origin.clone(),
        },
        truncation,
    })
}

/// Builds the triple for `sentence` under `query` and encodes it.
pub fn make_example(sentence: &Sentence, query: &QuerySpec, vocab: &Vocab, cfg: &SeqConfig) -> Result<Encoded> {
    Triple::new(sentence, query).encode(vocab, cfg)
}

/// Maps context-relative `(start, end)` pairs to typed sentence spans.
pub fn project_predictions(example: &MrcExample, pairs: &[(usize, usize)]) -> Result<Vec<EntitySpan>> {
    let len = example.context_len();
    pairs
        .iter()
        .map(|&(start, end)| {
            for coord in [start, end] {
                if coord >= len {
                    return Err(Error::OutOfContext { coord, len });
                }
            }
            if start > end {
                return Err(Error::InvalidSpans(format!("start {start} after end {end}")));
            }
            Ok(EntitySpan::new(start, end, example.origin.entity_type.clone()).with_surface(&example.context))
        })
        .collect()
}
