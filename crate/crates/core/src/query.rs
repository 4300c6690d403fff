//! Natural-language queries that encode an entity type, optionally with a
//! few known entities of that type as prior knowledge.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Which query family to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum QueryStrategy {
    /// The literal query `none`.
    None,
    /// Type only: `Can you detect chemical entities ?`
    Zero,
    /// Type plus `k` sampled example entities.
    K(usize),
}

impl QueryStrategy {
    /// The variants compared in the query ablation.
    pub const STANDARD: [QueryStrategy; 5] = [
        QueryStrategy::None,
        QueryStrategy::Zero,
        QueryStrategy::K(3),
        QueryStrategy::K(5),
        QueryStrategy::K(10),
    ];
}

impl fmt::Display for QueryStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryStrategy::None => f.write_str("none"),
            QueryStrategy::Zero => f.write_str("q0"),
            QueryStrategy::K(k) => write!(f, "q{k}"),
        }
    }
}

impl FromStr for QueryStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown query strategy {s:?} (expected none, q0, q3, q5, q10)"));
        match s {
            "none" => Ok(QueryStrategy::None),
            "q0" => Ok(QueryStrategy::Zero),
            _ => {
                let k: usize = s.strip_prefix('q').ok_or_else(bad)?.parse().map_err(|_| bad())?;
                Ok(QueryStrategy::K(k))
            }
        }
    }
}

impl From<QueryStrategy> for String {
    fn from(q: QueryStrategy) -> String {
        q.to_string()
    }
}

impl TryFrom<String> for QueryStrategy {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A constructed query for one entity type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub entity_type: String,
    pub strategy: QueryStrategy,
    pub text: String,
    pub tokens: Vec<String>,
    pub sampled_entities: Vec<String>,
    pub seed: u64,
}

impl QuerySpec {
    /// Number of query tokens (`M`), measured after entity insertion.
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }
}

pub fn query_token_count(spec: &QuerySpec) -> usize {
    spec.token_count()
}

/// Maps an entity-type label to the word used inside the query.
pub fn type_word(entity_type: &str) -> String {
    let lower = entity_type.to_lowercase();
    let has = |w: &str| lower.split(['/', '-', '_']).any(|p| p == w);
    if has("chemical") || has("drug") {
        "chemical".to_string()
    } else if has("disease") {
        "disease".to_string()
    } else if has("protein") || has("gene") {
        "protein".to_string()
    } else {
        lower
    }
}

/// Renders the query text for a strategy from already-chosen entities.
pub fn render_query(entity_type: &str, strategy: QueryStrategy, entities: &[String]) -> String {
    let word = type_word(entity_type);
    match strategy {
        QueryStrategy::None => "none".to_string(),
        QueryStrategy::Zero => format!("Can you detect {word} entities ?"),
        QueryStrategy::K(_) => format!("Can you detect {word} entities like {} ?", entities.join(" or ")),
    }
}

/// Builds a query from a fixed list of entities, bypassing the sampler.
pub fn query_from_entities(
    entity_type: &str,
    strategy: QueryStrategy,
    entities: Vec<String>,
    seed: u64,
) -> QuerySpec {
    let sampled_entities = match strategy {
        QueryStrategy::K(_) => entities,
        _ => Vec::new(),
    };
    let text = render_query(entity_type, strategy, &sampled_entities);
    QuerySpec {
        entity_type: entity_type.to_string(),
        strategy,
        tokens: text.split_whitespace().map(str::to_string).collect(),
        text,
        sampled_entities,
        seed,
    }
}

/// Seed for the sampler, derived from the run seed and the entity type.
pub fn sampler_seed(seed: u64, entity_type: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(entity_type.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Builds the query for `entity_type`. `K(k)` draws `min(k, n)` distinct
/// entities uniformly without replacement from the inventory.
pub fn build_query(
    entity_type: &str,
    strategy: QueryStrategy,
    inventory: &BTreeMap<String, Vec<String>>,
    seed: u64,
) -> Result<QuerySpec> {
    let entities = match strategy {
        QueryStrategy::K(k) => {
            let pool = inventory
                .get(entity_type)
                .filter(|p| !p.is_empty())
                .ok_or_else(|| Error::EmptyInventory {
                    entity_type: entity_type.to_string(),
                })?;
            let mut rng = ChaCha8Rng::seed_from_u64(sampler_seed(seed, entity_type));
            rand::seq::index::sample(&mut rng, pool.len(), k.min(pool.len()))
                .into_iter()
                .map(|i| pool[i].clone())
                .collect()
        }
        _ => Vec::new(),
    };
    Ok(query_from_entities(entity_type, strategy, entities, seed))
}
