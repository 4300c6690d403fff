//! File-level commands behind the `mrc-ner` binary: convert, train,
//! predict, evaluate, aggregate and significance. Every artefact is a file;
//! JSON-lines for records, pretty JSON for reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::corpus::{entity_inventory, parse_conll, ConllOptions, EntitySpan, Sentence};
use crate::decode::MatchOrder;
use crate::error::{Error, Result};
use crate::eval::{aggregate, score, t_test_with, EvalReport, RunStats, SignificanceResult, TTestKind};
use crate::model::TaskMode;
use crate::mrc::{build_vocab, Origin, SeqConfig, Triple, Truncation, Vocab};
use crate::query::{build_query, QuerySpec, QueryStrategy};
use crate::train::{encode_triples, predict_all, train, EpochLog, TrainConfig};

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Read { line: i + 1, source })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads a CoNLL file; the file stem becomes the document id.
pub fn read_conll(path: &Path, default_type: &str) -> Result<crate::corpus::ParsedCorpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let opts = ConllOptions {
        default_type: default_type.to_string(),
        doc_id: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "doc".into()),
        ..Default::default()
    };
    parse_conll(BufReader::new(file), &opts)
}

/// How query entities are sampled across sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuerySampling {
    /// One query per entity type for the whole run.
    #[default]
    PerRun,
    /// A fresh draw for every sentence.
    PerSentence,
}

fn sentence_seed(seed: u64, s: &Sentence) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(s.doc_id.as_bytes());
    h.update((s.sent_id as u64).to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("digest has 32 bytes"))
}

/// One triple per (sentence, entity type).
pub fn sentences_to_triples(
    sentences: &[Sentence],
    entity_types: &[String],
    strategy: QueryStrategy,
    seed: u64,
    inventory: &BTreeMap<String, Vec<String>>,
    sampling: QuerySampling,
) -> Result<(Vec<Triple>, Vec<QuerySpec>)> {
    let mut triples = Vec::with_capacity(sentences.len() * entity_types.len());
    let mut queries = Vec::new();
    if sentences.is_empty() {
        return Ok((triples, queries));
    }
    for ty in entity_types {
        match sampling {
            QuerySampling::PerRun => {
                let q = build_query(ty, strategy, inventory, seed)?;
                triples.extend(sentences.iter().map(|s| Triple::new(s, &q)));
                queries.push(q);
            }
            QuerySampling::PerSentence => {
                for s in sentences {
                    let q = build_query(ty, strategy, inventory, sentence_seed(seed, s))?;
                    triples.push(Triple::new(s, &q));
                    queries.push(q);
                }
            }
        }
    }
    triples.sort_by(|a, b| a.origin.cmp(&b.origin));
    Ok((triples, queries))
}

#[derive(Debug, Clone)]
pub struct ConvertOptions {
    pub input: PathBuf,
    pub out: PathBuf,
    /// Triples are produced for these types; the first also types bare labels.
    pub entity_types: Vec<String>,
    pub strategy: QueryStrategy,
    pub seed: u64,
    /// Corpora whose entities feed the query sampler (defaults to the input).
    pub inventory_from: Vec<PathBuf>,
    pub sampling: QuerySampling,
    /// Reports how many triples this window would truncate.
    pub seq_len: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConvertReport {
    pub sentences: usize,
    pub triples: usize,
    pub repair_count: usize,
    pub truncated_triples: usize,
    pub tokens_dropped: usize,
    pub spans_dropped: usize,
    pub queries: Vec<String>,
}

pub fn cmd_convert(opts: &ConvertOptions) -> Result<ConvertReport> {
    let default_type = opts
        .entity_types
        .first()
        .ok_or_else(|| Error::Config("at least one entity type is required".into()))?;
    let parsed = read_conll(&opts.input, default_type)?;
    let mut inv_sentences: Vec<Sentence> = Vec::new();
    let inventory = if opts.inventory_from.is_empty() {
        entity_inventory(&parsed.sentences)
    } else {
        for p in &opts.inventory_from {
            inv_sentences.extend(read_conll(p, default_type)?.sentences);
        }
        entity_inventory(&inv_sentences)
    };
    let (triples, queries) = sentences_to_triples(
        &parsed.sentences,
        &opts.entity_types,
        opts.strategy,
        opts.seed,
        &inventory,
        opts.sampling,
    )?;
    write_jsonl(&opts.out, &triples)?;

    let mut report = ConvertReport {
        sentences: parsed.sentences.len(),
        triples: triples.len(),
        repair_count: parsed.repair_count(),
        queries: queries
            .iter()
            .map(|q| q.text.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
        ..Default::default()
    };
    if let Some(seq_len) = opts.seq_len {
        let specials_only = build_vocab(std::iter::empty(), std::iter::empty(), 1);
        let cfg = SeqConfig {
            seq_len,
            ..Default::default()
        };
        for t in &triples {
            let tr = t.encode(&specials_only, &cfg)?.truncation;
            if tr.tokens_dropped > 0 {
                report.truncated_triples += 1;
            }
            report.tokens_dropped += tr.tokens_dropped;
            report.spans_dropped += tr.spans_dropped;
        }
    }
    info!(
        "converted {} sentences into {} triples ({} label repairs)",
        report.sentences, report.triples, report.repair_count
    );
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn digest_file(path: &Path) -> Result<InputDigest> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&data)),
        bytes: data.len() as u64,
    })
}

/// Everything needed to reproduce and audit one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: TrainConfig,
    pub inputs: Vec<InputDigest>,
    /// SHA-256 over the config and all input digests.
    pub content_hash: String,
    pub vocab_size: usize,
    pub train_examples: usize,
    pub dev_examples: usize,
    pub truncation: Truncation,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub steps: usize,
    pub final_metrics: Option<EvalReport>,
    pub checkpoint_sha256: String,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    /// The manifest with wall-clock time zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        RunManifest {
            wall_clock_secs: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainFiles {
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub manifest: Option<PathBuf>,
}

pub fn vocab_for(triples: &[Triple], min_count: usize) -> Vocab {
    let queries: Vec<Vec<String>> = triples.iter().map(Triple::query_tokens).collect();
    build_vocab(
        triples.iter().map(|t| t.context.as_slice()),
        queries.iter().map(Vec::as_slice),
        min_count,
    )
}

pub fn cmd_train(cfg: &TrainConfig, files: &TrainFiles) -> Result<RunManifest> {
    let started = Instant::now();
    cfg.validate()?;
    let train_triples: Vec<Triple> = read_jsonl(&files.train)?;
    let dev_triples: Vec<Triple> = match &files.dev {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let vocab = vocab_for(&train_triples, cfg.min_count);
    let seq = cfg.seq_config();
    let (train_ex, truncation) = encode_triples(&train_triples, &vocab, &seq, cfg.mode)?;
    let (dev_ex, _) = encode_triples(&dev_triples, &vocab, &seq, cfg.mode)?;
    if truncation.tokens_dropped > 0 {
        info!(
            "truncation dropped {} tokens and {} gold spans from training examples",
            truncation.tokens_dropped, truncation.spans_dropped
        );
    }

    let outcome = train(cfg, vocab.len(), &train_ex, &dev_ex)?;
    let checkpoint = Checkpoint::from_model(&outcome.best, seq, &vocab);
    let ck_json = checkpoint.to_json()?;
    fs::write(&files.checkpoint, &ck_json).map_err(|e| Error::io(&files.checkpoint, e))?;

    let mut inputs = vec![digest_file(&files.train)?];
    if let Some(dev) = &files.dev {
        inputs.push(digest_file(dev)?);
    }
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg)?);
    for d in &inputs {
        h.update(d.sha256.as_bytes());
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        inputs,
        content_hash: hex::encode(h.finalize()),
        vocab_size: vocab.len(),
        train_examples: train_ex.len(),
        dev_examples: dev_ex.len(),
        truncation,
        epochs: outcome.log,
        best_epoch: outcome.best_epoch,
        steps: outcome.steps,
        final_metrics: outcome.best_dev,
        checkpoint_sha256: hex::encode(Sha256::digest(ck_json.as_bytes())),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    if let Some(path) = &files.manifest {
        write_json(path, &manifest)?;
    }
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedSpan {
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub origin: Origin,
    pub entity_type: String,
    pub spans: Vec<PredictedSpan>,
}

impl PredictionRecord {
    pub fn entity_spans(&self) -> Vec<EntitySpan> {
        self.spans
            .iter()
            .map(|s| EntitySpan {
                start: s.start,
                end: s.end,
                entity_type: self.entity_type.clone(),
                surface: s.surface.clone(),
            })
            .collect()
    }
}

/// Runs a checkpoint over triples. `expected` is the task the caller
/// declares; a checkpoint trained for the other task is rejected.
pub fn predict_triples(checkpoint: &Checkpoint, triples: &[Triple], expected: TaskMode, order: MatchOrder) -> Result<Vec<PredictionRecord>> {
    if checkpoint.mode() != expected {
        return Err(Error::ModeMismatch(format!(
            "checkpoint was trained as {} but {} predictions were requested",
            checkpoint.mode(),
            expected
        )));
    }
    let model = checkpoint.to_model()?;
    let (examples, _) = encode_triples(triples, &checkpoint.vocab, &checkpoint.seq, expected)?;
    let predicted = predict_all(&model, &examples, order)?;
    Ok(examples
        .iter()
        .zip(predicted)
        .map(|(ex, spans)| PredictionRecord {
            origin: ex.origin.clone(),
            entity_type: ex.origin.entity_type.clone(),
            spans: spans
                .into_iter()
                .map(|s| PredictedSpan {
                    start: s.start,
                    end: s.end,
                    surface: s.surface,
                })
                .collect(),
        })
        .collect())
}

pub fn cmd_predict(checkpoint: &Path, triples: &Path, out: &Path, expected: TaskMode, order: MatchOrder) -> Result<usize> {
    let ck = Checkpoint::load(checkpoint)?;
    let triples: Vec<Triple> = read_jsonl(triples)?;
    let records = predict_triples(&ck, &triples, expected, order)?;
    write_jsonl(out, &records)?;
    Ok(records.len())
}

/// Scores predictions against the full (untruncated) answers of the triples.
pub fn evaluate_records(gold: &[Triple], predictions: &[PredictionRecord]) -> Result<EvalReport> {
    let mut g: BTreeMap<Origin, Vec<EntitySpan>> = BTreeMap::new();
    for t in gold {
        g.entry(t.origin.clone()).or_default().extend(t.gold_spans());
    }
    let mut p: BTreeMap<Origin, Vec<EntitySpan>> = BTreeMap::new();
    for r in predictions {
        p.entry(r.origin.clone()).or_default().extend(r.entity_spans());
    }
    score(&g, &p)
}

pub fn cmd_evaluate(gold: &Path, predictions: &Path, out: Option<&Path>) -> Result<EvalReport> {
    let gold: Vec<Triple> = read_jsonl(gold)?;
    let preds: Vec<PredictionRecord> = read_jsonl(predictions)?;
    let report = evaluate_records(&gold, &preds)?;
    if let Some(out) = out {
        write_json(out, &report)?;
    }
    Ok(report)
}

/// Builds run statistics from several metrics files (one per run).
pub fn cmd_aggregate(metrics: &[PathBuf], out: Option<&Path>) -> Result<RunStats> {
    let f1s = metrics
        .iter()
        .map(|p| read_json::<EvalReport>(p).map(|r| r.f1))
        .collect::<Result<Vec<_>>>()?;
    let stats = aggregate(&f1s)?;
    if let Some(out) = out {
        write_json(out, &stats)?;
    }
    Ok(stats)
}

#[derive(Deserialize)]
struct RunsOnly {
    runs: Vec<f64>,
}

pub fn cmd_significance(a: &Path, b: &Path, kind: TTestKind, out: Option<&Path>) -> Result<SignificanceResult> {
    let ra: RunsOnly = read_json(a)?;
    let rb: RunsOnly = read_json(b)?;
    let result = t_test_with(&ra.runs, &rb.runs, kind)?;
    if let Some(out) = out {
        write_json(out, &result)?;
    }
    Ok(result)
}
