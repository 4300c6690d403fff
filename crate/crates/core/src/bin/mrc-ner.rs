use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use mrc_ner::decode::MatchOrder;
use mrc_ner::eval::TTestKind;
use mrc_ner::heads::HeadVariant;
use mrc_ner::model::TaskMode;
use mrc_ner::pipeline::{self, ConvertOptions, QuerySampling, TrainFiles};
use mrc_ner::query::QueryStrategy;
use mrc_ner::train::TrainConfig;
use mrc_ner::Error;

#[derive(Parser)]
#[command(name = "mrc-ner", version, about = "NER as reading comprehension: convert, train, predict, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// CoNLL file -> (context, query, answer) triples as JSON lines.
    Convert {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Entity types to query; the first also types bare B/I labels.
        #[arg(long = "entity-type", required = true)]
        entity_types: Vec<String>,
        #[arg(long, default_value = "q3")]
        query_strategy: QueryStrategy,
        #[arg(long, default_value_t = 42)]
        query_seed: u64,
        /// Corpora to sample query entities from (default: the input).
        #[arg(long)]
        inventory: Vec<PathBuf>,
        /// Draw query entities per sentence instead of once per run.
        #[arg(long)]
        per_sentence: bool,
        /// Report truncation for this window length.
        #[arg(long)]
        seq_len: Option<usize>,
    },
    /// Train a model and write a checkpoint plus a run manifest.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        /// JSON config; omitted fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        mode: Option<TaskMode>,
        #[arg(long)]
        head_variant: Option<HeadVariant>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seq_len: Option<usize>,
        /// Recorded in the manifest; queries are fixed at conversion time.
        #[arg(long)]
        query_strategy: Option<QueryStrategy>,
        #[arg(long)]
        query_seed: Option<u64>,
    },
    /// Decode spans for every triple with a trained checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        triples: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// The task the checkpoint must have been trained for.
        #[arg(long, default_value = "mrc")]
        mode: TaskMode,
        #[arg(long)]
        start_driven: bool,
    },
    /// Exact-match precision, recall and F1.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Mean, sample std and max F1 over several metrics files.
    Aggregate {
        metrics: Vec<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Two-sample t-test between two run-statistics files.
    Significance {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        student: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io { .. } | Error::Read { .. } => "io",
        Error::Parse { .. } | Error::Json(_) => "parse",
        Error::UnknownTag { .. } | Error::InvalidSpans(_) => "labels",
        Error::EmptyInventory { .. } => "empty_inventory",
        Error::IdOutOfRange { .. } | Error::Shape(_) | Error::OutOfContext { .. } => "shape",
        Error::NonFinite { .. } | Error::Diverged(_) => "numeric",
        Error::EmptyLoss => "empty_loss",
        Error::UnknownSentence(_) => "unknown_sentence",
        Error::Stats(_) => "stats",
        Error::ModeMismatch(_) => "mode_mismatch",
        Error::Config(_) => "config",
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> mrc_ner::Result<()> {
    println!("{}", serde_json::to_string(v)?);
    Ok(())
}

fn run(cli: Cli) -> mrc_ner::Result<()> {
    match cli.command {
        Command::Convert {
            input,
            out,
            entity_types,
            query_strategy,
            query_seed,
            inventory,
            per_sentence,
            seq_len,
        } => {
            let report = pipeline::cmd_convert(&ConvertOptions {
                input,
                out,
                entity_types,
                strategy: query_strategy,
                seed: query_seed,
                inventory_from: inventory,
                sampling: if per_sentence {
                    QuerySampling::PerSentence
                } else {
                    QuerySampling::PerRun
                },
                seq_len,
            })?;
            print_json(&report)
        }
        Command::Train {
            train,
            dev,
            config,
            checkpoint,
            manifest,
            mode,
            head_variant,
            epochs,
            seed,
            learning_rate,
            batch_size,
            seq_len,
            query_strategy,
            query_seed,
        } => {
            let mut cfg: TrainConfig = match &config {
                Some(p) => pipeline::read_json(p)?,
                None => TrainConfig::default(),
            };
            if let Some(v) = mode {
                cfg.mode = v;
            }
            if let Some(v) = head_variant {
                cfg.head_variant = v;
            }
            if let Some(v) = epochs {
                cfg.epochs = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = learning_rate {
                cfg.optimizer.learning_rate = v;
            }
            if let Some(v) = batch_size {
                cfg.batch_size = v;
            }
            if let Some(v) = seq_len {
                cfg.seq_len = v;
            }
            if let Some(v) = query_strategy {
                cfg.query_strategy = v;
            }
            if let Some(v) = query_seed {
                cfg.query_seed = v;
            }
            let m = pipeline::cmd_train(
                &cfg,
                &TrainFiles {
                    train,
                    dev,
                    checkpoint,
                    manifest,
                },
            )?;
            print_json(&json!({
                "best_epoch": m.best_epoch,
                "steps": m.steps,
                "dev": m.final_metrics,
                "checkpoint_sha256": m.checkpoint_sha256,
            }))
        }
        Command::Predict {
            checkpoint,
            triples,
            out,
            mode,
            start_driven,
        } => {
            let order = if start_driven {
                MatchOrder::StartDriven
            } else {
                MatchOrder::EndDriven
            };
            let n = pipeline::cmd_predict(&checkpoint, &triples, &out, mode, order)?;
            print_json(&json!({ "predictions": n }))
        }
        Command::Evaluate { gold, predictions, out } => {
            let r = pipeline::cmd_evaluate(&gold, &predictions, out.as_deref())?;
            print_json(&r)
        }
        Command::Aggregate { metrics, out } => {
            let s = pipeline::cmd_aggregate(&metrics, out.as_deref())?;
            print_json(&s)
        }
        Command::Significance { a, b, student, out } => {
            let kind = if student { TTestKind::Student } else { TTestKind::Welch };
            let r = pipeline::cmd_significance(&a, &b, kind, out.as_deref())?;
            print_json(&r)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": error_kind(&e), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
