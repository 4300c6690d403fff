//! Seeded synthetic corpora for smoke tests and examples. Entity words
//! never occur as filler, so the task is separable by token identity.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{spans_to_bio, EntitySpan, Sentence};
use crate::nn::rng;

const CHEMICALS: &[&str] = &[
    "sodium", "lithium", "cocaine", "cannabis", "RA", "tacrolimus", "heparin", "cisplatin", "nicotine",
    "morphine", "aspirin", "caffeine", "ethanol", "warfarin", "dopamine", "insulin", "ketamine", "haloperidol",
    "valproate", "clozapine", "sodium chloride", "nitric oxide", "retinoic acid", "folic acid", "vitamin D",
    "lithium carbonate", "hydrogen peroxide", "carbon monoxide",
];

const DISEASES: &[&str] = &[
    "hepatitis", "hypertension", "seizures", "nephrotoxicity", "cardiomyopathy", "anemia", "psychosis",
    "migraine", "neutropenia", "arrhythmia", "liver toxicity", "renal failure", "heart failure", "breast cancer",
];

const FILLER: &[&str] = &[
    "the", "a", "of", "in", "and", "with", "was", "were", "is", "to", "by", "after", "for", "on", "patients",
    "treatment", "induced", "associated", "observed", "dose", "doses", "effect", "effects", "study", "group",
    "rats", "mice", "levels", "increased", "decreased", "significant", "results", "showed", "administration",
    "therapy", "risk", "daily", "chronic", "acute", "response", "clinical", "case", "cases", "reported",
    "during", "months", "weeks", "plasma", "serum", "exposure", "following", "high", "low", "mg", "kg", "this",
    "these", "both", "may", "not", "than", "compared", "control", "subjects", "we", "that", "from", "at", ".",
    ",", "-", "(", ")",
];

/// Which entity lexicon to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthType {
    Chemical,
    Disease,
}

impl SynthType {
    pub fn label(self) -> &'static str {
        match self {
            SynthType::Chemical => "CHEMICAL",
            SynthType::Disease => "DISEASE",
        }
    }

    fn lexicon(self) -> &'static [&'static str] {
        match self {
            SynthType::Chemical => CHEMICALS,
            SynthType::Disease => DISEASES,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub max_entities: usize,
    pub entity_type: SynthType,
    pub doc_id: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences: 50,
            min_len: 6,
            max_len: 14,
            max_entities: 2,
            entity_type: SynthType::Chemical,
            doc_id: "synthetic".into(),
        }
    }
}

/// Generates sentences with 1..=`max_entities` entities each, separated by
/// at least one filler token.
pub fn generate(cfg: &SynthConfig, seed: u64) -> Vec<Sentence> {
    let mut r = rng(seed);
    let lexicon = cfg.entity_type.lexicon();
    let label = cfg.entity_type.label();
    (0..cfg.sentences)
        .map(|sent_id| {
            let n_ent = r.random_range(1..=cfg.max_entities.max(1));
            let entities: Vec<Vec<&str>> = (0..n_ent)
                .map(|_| lexicon.choose(&mut r).expect("non-empty lexicon").split(' ').collect())
                .collect();
            let ent_tokens: usize = entities.iter().map(Vec::len).sum();
            let min_fill = (n_ent + 1).max(cfg.min_len.saturating_sub(ent_tokens));
            let max_fill = min_fill.max(cfg.max_len.saturating_sub(ent_tokens));
            let n_fill = r.random_range(min_fill..=max_fill);
            // gaps[i] fillers before entity i, gaps[n_ent] after the last
            let mut gaps = vec![0usize; n_ent + 1];
            for g in gaps.iter_mut().take(n_ent).skip(1) {
                *g = 1;
            }
            for _ in 0..n_fill - (n_ent - 1) {
                gaps[r.random_range(0..=n_ent)] += 1;
            }
            let mut words: Vec<String> = Vec::new();
            let mut spans = Vec::new();
            for (i, gap) in gaps.iter().enumerate() {
                for _ in 0..*gap {
                    words.push(FILLER.choose(&mut r).expect("non-empty filler").to_string());
                }
                if let Some(ent) = entities.get(i) {
                    let start = words.len();
                    words.extend(ent.iter().map(|w| w.to_string()));
                    spans.push(EntitySpan::new(start, words.len() - 1, label));
                }
            }
            let labels = spans_to_bio(&spans, words.len()).expect("generated spans are flat");
            Sentence::new(cfg.doc_id.clone(), sent_id, words, labels)
        })
        .collect()
}
