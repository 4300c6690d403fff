//! From span logits to entities: per-row argmax gives candidate start and
//! end indexes, and the nearest-match rule pairs them into flat spans.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::EntitySpan;
use crate::error::Result;
use crate::heads::SpanLogits;
use crate::mrc::{project_predictions, MrcExample};

/// Candidate start and end positions, both ascending and duplicate-free.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexSets {
    pub starts: Vec<usize>,
    pub ends: Vec<usize>,
}

/// Which side drives the greedy pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchOrder {
    /// Each end, in ascending order, takes the closest start at or before it.
    #[default]
    EndDriven,
    /// Each start, in ascending order, takes the closest end at or after it.
    StartDriven,
}

/// Rows whose class-1 logit strictly beats class 0. Ties count as class 0.
fn positive_rows(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, r)| r[1] > r[0])
        .map(|(i, _)| i)
        .collect()
}

pub fn extract_indexes(logits: &SpanLogits) -> IndexSets {
    IndexSets {
        starts: positive_rows(&logits.start),
        ends: positive_rows(&logits.end),
    }
}

/// End-driven nearest match. Pairing `(s, e)` discards every start before
/// `s`, so the output is always flat.
pub fn nearest_match(sets: &IndexSets) -> Vec<(usize, usize)> {
    nearest_match_with(sets, MatchOrder::EndDriven)
}

pub fn nearest_match_with(sets: &IndexSets, order: MatchOrder) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    match order {
        MatchOrder::EndDriven => {
            // starts[next..] are still available
            let mut next = 0;
            for &e in &sets.ends {
                let avail = &sets.starts[next..];
                let upto = avail.partition_point(|&s| s <= e);
                if upto > 0 {
                    pairs.push((avail[upto - 1], e));
                    next += upto;
                }
            }
        }
        MatchOrder::StartDriven => {
            let mut next = 0;
            for &s in &sets.starts {
                if pairs.last().is_some_and(|&(_, e)| s <= e) {
                    continue;
                }
                let avail = &sets.ends[next..];
                let from = avail.partition_point(|&e| e < s);
                if let Some(&e) = avail.get(from) {
                    pairs.push((s, e));
                    next += from + 1;
                }
            }
        }
    }
    pairs
}

/// Argmax, nearest match and projection back to typed sentence spans.
pub fn decode_example(example: &MrcExample, logits: &SpanLogits) -> Result<Vec<EntitySpan>> {
    decode_example_with(example, logits, MatchOrder::EndDriven)
}

pub fn decode_example_with(example: &MrcExample, logits: &SpanLogits, order: MatchOrder) -> Result<Vec<EntitySpan>> {
    let pairs = nearest_match_with(&extract_indexes(logits), order);
    project_predictions(example, &pairs)
}

/// Logits with margin `±margin` that encode the example's own targets.
pub fn target_logits(example: &MrcExample, margin: f64) -> SpanLogits {
    let encode = |bits: &[u8]| {
        let mut m = Array2::zeros((bits.len(), 2));
        for (i, &b) in bits.iter().enumerate() {
            let sign = if b == 1 { 1.0 } else { -1.0 };
            m[[i, 0]] = -sign * margin;
            m[[i, 1]] = sign * margin;
        }
        m
    };
    SpanLogits {
        start: encode(&example.y_start),
        end: encode(&example.y_end),
    }
}
