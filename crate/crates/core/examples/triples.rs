//! Turn a labelled sentence into a (context, query, answer) triple and the
//! fixed-length model input built from it.

use mrc_ner::corpus::{parse_conll, ConllOptions};
use mrc_ner::mrc::{build_vocab_from_sentences, SeqConfig, SeqOrder, Triple};
use mrc_ner::query::{build_query, QueryStrategy};

fn main() -> mrc_ner::Result<()> {
    let text = "Meloxicam\tB\n-\tO\ninduced\tO\nliver\tO\ntoxicity\tO\n.\tO\n";
    let sentences = parse_conll(text.as_bytes(), &ConllOptions::with_type("CHEMICAL"))?.sentences;
    let query = build_query("CHEMICAL", QueryStrategy::Zero, &Default::default(), 0)?;
    let triple = Triple::new(&sentences[0], &query);
    println!("{}", serde_json::to_string_pretty(&triple)?);

    let vocab = build_vocab_from_sentences(&sentences, std::slice::from_ref(&query), 1);
    for order in [SeqOrder::ContextFirst, SeqOrder::QueryFirst] {
        let cfg = SeqConfig { seq_len: 18, order };
        let ex = triple.encode(&vocab, &cfg)?.example;
        let toks: Vec<&str> = ex.input_ids.iter().map(|&i| vocab.token(i).unwrap_or("?")).collect();
        println!("\n{order:?}");
        println!("  tokens   {}", toks.join(" "));
        println!("  segments {:?}", ex.segment_ids);
        println!("  mask     {:?}", ex.attention_mask);
        println!("  context  {:?}  y_start {:?}  y_end {:?}", ex.context_range, ex.y_start, ex.y_end);
    }

    let tight = SeqConfig {
        seq_len: 12,
        ..Default::default()
    };
    let enc = triple.encode(&vocab, &tight)?;
    println!("\nseq_len 12 keeps {:?}, dropped {:?}", enc.example.context, enc.truncation);
    Ok(())
}
