//! The file-level workflow: CoNLL in, triples, a trained checkpoint,
//! predictions and a metrics report out.
//!
//!     cargo run --release --example pipeline [workdir]

use std::fs;
use std::path::PathBuf;

use mrc_ner::corpus::{write_conll, LabelStyle};
use mrc_ner::decode::MatchOrder;
use mrc_ner::model::TaskMode;
use mrc_ner::pipeline::{cmd_convert, cmd_evaluate, cmd_predict, cmd_train, ConvertOptions, QuerySampling, TrainFiles};
use mrc_ner::query::QueryStrategy;
use mrc_ner::synth::{generate, SynthConfig};
use mrc_ner::train::TrainConfig;

fn main() -> mrc_ner::Result<()> {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mrc-ner-pipeline"));
    fs::create_dir_all(&dir).map_err(|e| mrc_ner::Error::Config(e.to_string()))?;
    let write = |name: &str, n: usize, seed: u64| -> PathBuf {
        let s = generate(
            &SynthConfig {
                sentences: n,
                ..Default::default()
            },
            seed,
        );
        let path = dir.join(name);
        fs::write(&path, write_conll(&s, '\t', LabelStyle::Bare)).expect("writable workdir");
        path
    };
    let train_conll = write("train.conll", 60, 1);
    let test_conll = write("test.conll", 20, 2);

    for (input, out) in [(&train_conll, "train.jsonl"), (&test_conll, "test.jsonl")] {
        let report = cmd_convert(&ConvertOptions {
            input: input.clone(),
            out: dir.join(out),
            entity_types: vec!["CHEMICAL".into()],
            strategy: QueryStrategy::K(3),
            seed: 42,
            inventory_from: vec![train_conll.clone()],
            sampling: QuerySampling::PerRun,
            seq_len: Some(64),
        })?;
        println!("{out}: {} triples, query {:?}", report.triples, report.queries);
    }

    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let manifest = cmd_train(
        &cfg,
        &TrainFiles {
            train: dir.join("train.jsonl"),
            dev: Some(dir.join("test.jsonl")),
            checkpoint: dir.join("model.json"),
            manifest: Some(dir.join("manifest.json")),
        },
    )?;
    println!("best epoch {} after {} steps", manifest.best_epoch, manifest.steps);

    cmd_predict(&dir.join("model.json"), &dir.join("test.jsonl"), &dir.join("pred.jsonl"), TaskMode::Mrc, MatchOrder::EndDriven)?;
    let report = cmd_evaluate(&dir.join("test.jsonl"), &dir.join("pred.jsonl"), Some(&dir.join("metrics.json")))?;
    println!("test: {report}");
    println!("artefacts in {}", dir.display());
    Ok(())
}
