//! Parse a two-column CoNLL corpus, repair a stray `I`, list the entity
//! spans and write the corpus back out.

use mrc_ner::corpus::{bio_to_spans, entity_inventory, parse_conll, write_conll, ConllOptions, LabelStyle};

const CORPUS: &str = "\
Meloxicam\tB
-\tO
induced\tO
liver\tO
toxicity\tO
.\tO

Chronic\tO
lithium\tI
carbonate\tI
and\tO
sodium\tB
chloride\tI
intake\tO
";

fn main() -> mrc_ner::Result<()> {
    let parsed = parse_conll(CORPUS.as_bytes(), &ConllOptions::with_type("CHEMICAL"))?;
    for r in &parsed.repairs {
        println!("repaired sentence {} token {} (line {}): {} -> {}", r.sent_id, r.index, r.line, r.from, r.to);
    }
    for s in &parsed.sentences {
        println!("{}#{}: {}", s.doc_id, s.sent_id, s.words().join(" "));
        for span in s.spans() {
            println!("  [{}..={}] {} {:?}", span.start, span.end, span.entity_type, span.surface);
        }
        assert_eq!(bio_to_spans(&s.labels).len(), s.spans().len());
    }
    println!("inventory: {:?}", entity_inventory(&parsed.sentences));
    print!("\n{}", write_conll(&parsed.sentences, '\t', LabelStyle::Suffixed));
    Ok(())
}
