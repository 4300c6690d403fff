//! Named-entity recognition framed as machine reading comprehension.
//!
//! Each entity type becomes a natural-language query; a sentence, its query
//! and the gold spans form a (Context, Query, Answer) triple. A small
//! transformer encoder reads `[CLS] context [SEP] query [SEP]`, two binary
//! heads mark start and end tokens over the context, and a nearest-match
//! rule pairs them into flat entity spans. A per-token B/I/O softmax over
//! the same encoder serves as the sequence-labelling comparator.
//!
//! Modules, bottom up:
//!
//! - [`corpus`]: CoNLL parsing, BIO repair, BIO and span conversion
//! - [`query`]: query templates and seeded entity sampling
//! - [`mrc`]: vocabulary, triples and model-ready examples
//! - [`encoder`]: the transformer and its reverse pass
//! - [`heads`]: start / end heads and the span loss
//! - [`decode`]: argmax index sets and nearest-match pairing
//! - [`baseline`]: the B/I/O softmax head
//! - [`eval`]: exact-match P/R/F1, run statistics and t-tests
//! - [`train`], [`checkpoint`], [`pipeline`]: training and file-level commands
//!
//! The `examples/` directory has one runnable program per capability.

pub mod baseline;
pub mod checkpoint;
pub mod corpus;
pub mod decode;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod heads;
pub mod model;
pub mod mrc;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod query;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
