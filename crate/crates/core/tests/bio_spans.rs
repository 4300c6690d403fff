mod common;

use common::{paint, scan_runs, triples_of, valid_bio, TYPES};
use mrc_ner::corpus::{
    bio_to_spans, is_bio_valid, parse_conll, repair_bio, repair_labels, spans_to_bio, write_conll, BioLabel, ConllOptions,
    EntitySpan, LabelStyle, Sentence,
};
use proptest::prelude::*;

/// Raw tag strings, including invalid `I` continuations.
fn raw_tags() -> impl Strategy<Value = Vec<String>> {
    let tag = prop_oneof![
        Just("O".to_string()),
        Just("B".to_string()),
        Just("I".to_string()),
        (0..TYPES.len()).prop_map(|t| format!("B-{}", TYPES[t])),
        (0..TYPES.len()).prop_map(|t| format!("I-{}", TYPES[t])),
    ];
    prop::collection::vec(tag, 0..=64)
}

/// Oracle repair: an `I` becomes `B` unless the previous label is non-`O`
/// with the same type.
fn oracle_repair(raw: &[String]) -> Vec<BioLabel> {
    let parsed: Vec<BioLabel> = raw.iter().map(|r| BioLabel::parse(r, "ENTITY").unwrap()).collect();
    let mut out = Vec::new();
    for (i, l) in parsed.iter().enumerate() {
        let ok = l.tag() != mrc_ner::corpus::BioTag::I
            || (i > 0 && parsed[i - 1].entity_type().is_some() && parsed[i - 1].entity_type() == l.entity_type());
        out.push(match (ok, l.entity_type()) {
            (false, Some(t)) => BioLabel::begin(t),
            _ => l.clone(),
        });
    }
    out
}

proptest! {
    #![proptest_config(common::cases(1000))]

    #[test]
    fn bio_span_round_trip(labels in valid_bio(64, 8)) {
        let spans = bio_to_spans(&labels);
        prop_assert_eq!(triples_of(&spans), scan_runs(&labels));
        prop_assert!(spans.len() <= 8);
        prop_assert_eq!(&spans_to_bio(&spans, labels.len()).unwrap(), &labels);
        let again = bio_to_spans(&paint(&triples_of(&spans), labels.len()));
        prop_assert_eq!(again, spans);
    }

    #[test]
    fn repair_matches_oracle_and_is_idempotent(raw in raw_tags()) {
        let (fixed, changed) = repair_bio(&raw, "ENTITY").unwrap();
        prop_assert_eq!(&fixed, &oracle_repair(&raw));
        prop_assert!(is_bio_valid(&fixed));
        for &i in &changed {
            prop_assert!(raw[i].starts_with('I'));
        }
        let (twice, changed2) = repair_labels(fixed.clone());
        prop_assert_eq!(twice, fixed);
        prop_assert!(changed2.is_empty());
    }

    #[test]
    fn conll_write_parse_round_trip(sentences in prop::collection::vec(valid_bio(12, 4).prop_filter("non-empty", |l| !l.is_empty()), 0..6)) {
        let sents: Vec<Sentence> = sentences
            .iter()
            .enumerate()
            .map(|(k, labels)| Sentence::new("doc", k, (0..labels.len()).map(|i| format!("w{k}_{i}")), labels.clone()))
            .collect();
        let text = write_conll(&sents, '\t', LabelStyle::Suffixed);
        let parsed = parse_conll(text.as_bytes(), &ConllOptions::default()).unwrap();
        prop_assert_eq!(parsed.repair_count(), 0);
        prop_assert_eq!(&parsed.sentences, &sents);
        prop_assert_eq!(write_conll(&parsed.sentences, '\t', LabelStyle::Suffixed), text);
    }
}

#[test]
fn overlapping_spans_are_rejected() {
    let spans = [EntitySpan::new(1, 3, "X"), EntitySpan::new(3, 4, "X")];
    assert!(spans_to_bio(&spans, 6).is_err());
    assert!(spans_to_bio(&[EntitySpan::new(2, 6, "X")], 6).is_err());
}
