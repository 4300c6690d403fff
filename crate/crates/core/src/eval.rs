//! Entity-level exact-match scoring, multi-run aggregation and t-tests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::EntitySpan;
use crate::error::{Error, Result};
use crate::mrc::Origin;

/// Micro-averaged precision/recall/F1 over exact `(start, end, type)` matches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        EvalReport {
            precision,
            recall,
            f1: f1_score(precision, recall),
            tp,
            fp,
            fn_,
        }
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P {:.2}  R {:.2}  F1 {:.2}  (tp {}, fp {}, fn {})",
            percent(self.precision),
            percent(self.recall),
            percent(self.f1),
            self.tp,
            self.fp,
            self.fn_
        )
    }
}

/// `2PR / (P + R)`, or 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// A fraction as a percentage rounded to two decimals, half away from zero.
pub fn percent(x: f64) -> f64 {
    (x * 10_000.0).round() / 100.0
}

/// Scores predictions against gold, both keyed by origin. Every gold key
/// is a sentence the predictions may refer to.
pub fn score(
    gold: &BTreeMap<Origin, Vec<EntitySpan>>,
    predicted: &BTreeMap<Origin, Vec<EntitySpan>>,
) -> Result<EvalReport> {
    if let Some(unknown) = predicted.keys().find(|k| !gold.contains_key(k)) {
        return Err(Error::UnknownSentence(unknown.to_string()));
    }
    let key = |s: &EntitySpan| (s.start, s.end, s.entity_type.clone());
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (origin, gold_spans) in gold {
        let g: BTreeSet<_> = gold_spans.iter().map(key).collect();
        let p: BTreeSet<_> = predicted.get(origin).into_iter().flatten().map(key).collect();
        let hit = g.intersection(&p).count();
        tp += hit;
        fp += p.len() - hit;
        fn_ += g.len() - hit;
    }
    Ok(EvalReport::from_counts(tp, fp, fn_))
}

/// Summary of one configuration over repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub runs: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 when only one run exists.
    pub std: f64,
    pub max: f64,
    #[serde(default = "default_true")]
    pub std_defined: bool,
}

fn default_true() -> bool {
    true
}

pub fn aggregate(values: &[f64]) -> Result<RunStats> {
    if values.is_empty() {
        return Err(Error::Stats("cannot aggregate an empty list of runs".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std_defined = values.len() >= 2;
    let std = if std_defined {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(RunStats {
        runs: values.to_vec(),
        mean,
        std,
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        std_defined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stars {
    #[serde(rename = "ns")]
    NotSignificant,
    #[serde(rename = "*")]
    P05,
    #[serde(rename = "**")]
    P01,
}

impl Stars {
    pub fn from_p(p: f64) -> Self {
        if p < 0.01 {
            Stars::P01
        } else if p < 0.05 {
            Stars::P05
        } else {
            Stars::NotSignificant
        }
    }
}

impl fmt::Display for Stars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stars::NotSignificant => "ns",
            Stars::P05 => "*",
            Stars::P01 => "**",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TTestKind {
    /// Unequal variances, Welch-Satterthwaite degrees of freedom.
    #[default]
    Welch,
    /// Pooled variance, `n_a + n_b - 2` degrees of freedom.
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub t: f64,
    pub p: f64,
    pub stars: Stars,
    pub df: f64,
    /// Both samples have zero variance and different means.
    #[serde(default)]
    pub degenerate: bool,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided two-sample Welch t-test.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<SignificanceResult> {
    t_test_with(a, b, TTestKind::Welch)
}

pub fn t_test_with(a: &[f64], b: &[f64], kind: TTestKind) -> Result<SignificanceResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Stats(format!(
            "t-test needs at least two values per sample (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let diff = ma - mb;
    let (se2, df) = match kind {
        TTestKind::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            (qa + qb, df)
        }
        TTestKind::Student => {
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
            (pooled * (1.0 / na + 1.0 / nb), na + nb - 2.0)
        }
    };
    if se2 == 0.0 {
        let (t, p, degenerate) = if diff == 0.0 {
            (0.0, 1.0, false)
        } else {
            (f64::INFINITY.copysign(diff), 0.0, true)
        };
        return Ok(SignificanceResult {
            t,
            p,
            stars: Stars::from_p(p),
            df: na + nb - 2.0,
            degenerate,
        });
    }
    let t = diff / se2.sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Stats(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(SignificanceResult {
        t,
        p,
        stars: Stars::from_p(p),
        df,
        degenerate: false,
    })
}
