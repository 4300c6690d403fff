//! Summarise repeated runs of two systems and test whether their means
//! differ.

use mrc_ner::eval::{aggregate, f1_score, percent, t_test_with, TTestKind};

fn main() -> mrc_ner::Result<()> {
    let ours = [92.81, 92.64, 92.92, 92.58, 92.55];
    let theirs = [92.12, 92.40, 91.98, 92.25, 92.31];
    for (name, runs) in [("ours", &ours[..]), ("theirs", &theirs[..])] {
        let s = aggregate(runs)?;
        println!("{name:<7} {:.2} ± {:.2} (max {:.2}, {} runs)", s.mean, s.std, s.max, s.runs.len());
    }
    for kind in [TTestKind::Welch, TTestKind::Student] {
        let r = t_test_with(&ours, &theirs, kind)?;
        println!("{kind:?}: t = {:.4}, df = {:.2}, p = {:.3e} {}", r.t, r.df, r.p, r.stars);
    }
    println!("F1 of P=0.9437, R=0.9400: {}", percent(f1_score(0.9437, 0.94)));
    Ok(())
}
