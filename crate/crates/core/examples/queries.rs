//! Every query strategy for one entity type, sampled from a small
//! inventory, plus the forced three-entity example.

use std::collections::BTreeMap;

use mrc_ner::query::{build_query, query_from_entities, QueryStrategy};

fn main() -> mrc_ner::Result<()> {
    let mut inventory = BTreeMap::new();
    inventory.insert(
        "CHEMICAL".to_string(),
        ["RA", "cannabis", "cocaine", "heparin", "lithium", "morphine", "nicotine", "sodium", "tacrolimus", "valproate", "warfarin"]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>(),
    );
    for strategy in QueryStrategy::STANDARD {
        let q = build_query("CHEMICAL", strategy, &inventory, 7)?;
        println!("{:<5} ({:>2} tokens) {}", strategy.to_string(), q.token_count(), q.text);
    }
    let forced = query_from_entities(
        "CHEMICAL",
        QueryStrategy::K(3),
        vec!["sodium".into(), "RA".into(), "cannabis".into()],
        0,
    );
    println!("forced: {}", forced.text);
    Ok(())
}
