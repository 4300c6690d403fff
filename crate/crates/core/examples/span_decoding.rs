//! Nearest-match pairing of predicted start and end indexes, end-driven
//! and start-driven.

use mrc_ner::decode::{nearest_match_with, IndexSets, MatchOrder};

fn main() {
    let cases: [(&[usize], &[usize]); 6] = [
        (&[2, 7], &[4, 9]),
        (&[2, 3], &[5]),
        (&[], &[5]),
        (&[1, 3], &[4, 5]),
        (&[2, 7], &[3, 4]),
        (&[0, 4, 5], &[1, 2, 6]),
    ];
    println!("{:<14} {:<12} {:<22} start-driven", "starts", "ends", "end-driven");
    for (starts, ends) in cases {
        let sets = IndexSets {
            starts: starts.to_vec(),
            ends: ends.to_vec(),
        };
        let ed = nearest_match_with(&sets, MatchOrder::EndDriven);
        let sd = nearest_match_with(&sets, MatchOrder::StartDriven);
        println!("{:<14} {:<12} {:<22} {:?}", format!("{starts:?}"), format!("{ends:?}"), format!("{ed:?}"), sd);
    }
}
