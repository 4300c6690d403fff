//! Trains the reading-comprehension model (both end-head variants) and the
//! B/I/O baseline on a small synthetic corpus until they fit it exactly.
//!
//!     cargo run --release --example overfit_synthetic [sentences] [epochs]

use std::time::Instant;

use mrc_ner::corpus::entity_inventory;
use mrc_ner::heads::HeadVariant;
use mrc_ner::model::TaskMode;
use mrc_ner::pipeline::{sentences_to_triples, vocab_for, QuerySampling};
use mrc_ner::query::QueryStrategy;
use mrc_ner::synth::{generate, SynthConfig};
use mrc_ner::train::{encode_triples, train, TrainConfig};

fn main() -> mrc_ner::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let sentences: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(50);
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(200);

    let corpus = generate(
        &SynthConfig {
            sentences,
            ..Default::default()
        },
        11,
    );
    let inventory = entity_inventory(&corpus);
    let (triples, queries) = sentences_to_triples(
        &corpus,
        &["CHEMICAL".to_string()],
        QueryStrategy::K(3),
        42,
        &inventory,
        QuerySampling::PerRun,
    )?;
    println!("query: {}", queries[0].text);

    for (mode, variant) in [
        (TaskMode::Mrc, HeadVariant::Conditioned),
        (TaskMode::Mrc, HeadVariant::Ablation),
        (TaskMode::BioBaseline, HeadVariant::Conditioned),
    ] {
        let cfg = TrainConfig {
            mode,
            head_variant: variant,
            epochs,
            stop_at_dev_f1: Some(1.0),
            ..TrainConfig::default()
        };
        let vocab = vocab_for(&triples, cfg.min_count);
        let (examples, _) = encode_triples(&triples, &vocab, &cfg.seq_config(), mode)?;
        let t0 = Instant::now();
        let out = train(&cfg, vocab.len(), &examples, &examples)?;
        let label = match mode {
            TaskMode::Mrc => format!("mrc/{variant:?}"),
            TaskMode::BioBaseline => "bio-baseline".to_string(),
        };
        println!(
            "{label:<18} train F1 {:.4} at epoch {:>3} ({:.1}s, vocab {})",
            out.best_dev.map_or(0.0, |r| r.f1),
            out.best_epoch,
            t0.elapsed().as_secs_f64(),
            vocab.len()
        );
    }
    Ok(())
}
