//! Central-difference check of the hand-written reverse pass on a tiny
//! model, for both end-head variants.

use mrc_ner::corpus::{spans_to_bio, EntitySpan, Sentence};
use mrc_ner::encoder::{EncoderConfig, Mode};
use mrc_ner::heads::HeadVariant;
use mrc_ner::model::Model;
use mrc_ner::mrc::{build_vocab_from_sentences, SeqConfig, Triple};
use mrc_ner::nn::Parameters;
use mrc_ner::query::{build_query, QueryStrategy};

fn main() -> mrc_ner::Result<()> {
    let words = ["aspirin", "induced", "liver", "toxicity", "."];
    let labels = spans_to_bio(&[EntitySpan::new(0, 0, "CHEMICAL")], words.len())?;
    let s = Sentence::new("demo", 0, words, labels);
    let q = build_query("CHEMICAL", QueryStrategy::Zero, &Default::default(), 0)?;
    let vocab = build_vocab_from_sentences(std::slice::from_ref(&s), std::slice::from_ref(&q), 1);
    let ex = Triple::new(&s, &q)
        .encode(
            &vocab,
            &SeqConfig {
                seq_len: 16,
                ..Default::default()
            },
        )?
        .example;
    let cfg = EncoderConfig {
        layers: 2,
        model_dim: 8,
        heads: 2,
        ffn_dim: 16,
        vocab_size: vocab.len(),
        max_positions: 16,
        dropout: 0.0,
    };
    let h = 1e-5;
    for variant in [HeadVariant::Conditioned, HeadVariant::Ablation] {
        let model = Model::new_mrc(cfg, variant, 1);
        let grads = model.loss_and_grads(&ex, 16, Mode::Eval)?.grads;
        let mut probe = model.clone();
        let mut worst = (0.0f64, String::new());
        for (ti, g) in grads.tensors().iter().enumerate() {
            // every 7th coordinate keeps the demo quick
            for c in (0..g.data.len()).step_by(7) {
                let orig = probe.tensors()[ti].data[c];
                probe.tensors_mut()[ti].data[c] = orig + h;
                let plus = probe.loss_and_grads(&ex, 16, Mode::Eval)?.loss;
                probe.tensors_mut()[ti].data[c] = orig - h;
                let minus = probe.loss_and_grads(&ex, 16, Mode::Eval)?.loss;
                probe.tensors_mut()[ti].data[c] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let rel = (g.data[c] - numeric).abs() / g.data[c].abs().max(numeric.abs()).max(1e-6);
                if rel > worst.0 {
                    worst = (rel, format!("{}[{c}]", g.name));
                }
            }
        }
        println!("{variant:?}: {} parameters, worst relative error {:.2e} at {}", model.num_parameters(), worst.0, worst.1);
    }
    Ok(())
}
