//! Reference scorers.
//!
//! The constant and random scorers pin down chance level, the oracle pins
//! down perfect performance, the noisy-similarity scorer gives alignment
//! tasks with a tunable difficulty, and the translational model is a small
//! trainable link prediction baseline.

mod noisy;
mod translational;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use noisy::NoisySimilarityScorer;
pub use translational::{
    read_embeddings, train_translational, write_embeddings, EmbeddingTable, EMBEDDING_MAGIC, EMBEDDING_VERSION, TrainedTranslational,
    TranslationalParams, TranslationalScorer,
};

use crate::ea::{AlignedPair, EaScorer};
use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId, Triple};
use crate::lp::LpScorer;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn hash_words(seed: u64, words: &[u64]) -> u64 {
    words.iter().fold(splitmix(seed), |h, &w| splitmix(h ^ w))
}

/// Uniform in `[0, 1)` from 53 hashed bits.
fn hashed_uniform(seed: u64, words: &[u64]) -> f64 {
    (hash_words(seed, words) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Gives every candidate the same score.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantScorer;

impl LpScorer for ConstantScorer {
    fn score_tails(&self, _: EntityId, _: RelationId, candidates: &[EntityId]) -> Vec<f64> {
        vec![0.0; candidates.len()]
    }
    fn score_heads(&self, _: RelationId, _: EntityId, candidates: &[EntityId]) -> Vec<f64> {
        vec![0.0; candidates.len()]
    }
}

impl EaScorer for ConstantScorer {
    fn score_right(&self, _: EntityId, candidates: &[EntityId]) -> Vec<f64> {
        vec![0.0; candidates.len()]
    }
    fn score_left(&self, _: EntityId, candidates: &[EntityId]) -> Vec<f64> {
        vec![0.0; candidates.len()]
    }
}

/// I.i.d. uniform scores, a pure function of `(seed, query, candidate)`.
///
/// Head and tail queries of the same triple use different keys, so their
/// ranks are independent.
#[derive(Debug, Clone, Copy)]
pub struct RandomScorer {
    seed: u64,
}

impl RandomScorer {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn scores(&self, tag: u64, a: u64, b: u64, candidates: &[EntityId]) -> Vec<f64> {
        candidates
            .iter()
            .map(|&c| hashed_uniform(self.seed, &[tag, a, b, c as u64]))
            .collect()
    }
}

impl LpScorer for RandomScorer {
    fn score_tails(&self, head: EntityId, relation: RelationId, candidates: &[EntityId]) -> Vec<f64> {
        self.scores(0, head as u64, relation as u64, candidates)
    }
    fn score_heads(&self, relation: RelationId, tail: EntityId, candidates: &[EntityId]) -> Vec<f64> {
        self.scores(1, relation as u64, tail as u64, candidates)
    }
}

impl EaScorer for RandomScorer {
    fn score_right(&self, left: EntityId, candidates: &[EntityId]) -> Vec<f64> {
        self.scores(2, left as u64, 0, candidates)
    }
    fn score_left(&self, right: EntityId, candidates: &[EntityId]) -> Vec<f64> {
        self.scores(3, right as u64, 0, candidates)
    }
}

/// Scores 1 for known-true triples (or aligned pairs) and 0 otherwise.
#[derive(Debug, Clone, Default)]
pub struct OracleScorer {
    triples: HashSet<Triple>,
    pairs: HashSet<AlignedPair>,
}

impl OracleScorer {
    pub fn for_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        Self {
            triples: triples.into_iter().collect(),
            pairs: HashSet::new(),
        }
    }

    pub fn for_alignment(pairs: impl IntoIterator<Item = AlignedPair>) -> Self {
        Self {
            triples: HashSet::new(),
            pairs: pairs.into_iter().collect(),
        }
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl LpScorer for OracleScorer {
    fn score_tails(&self, head: EntityId, relation: RelationId, candidates: &[EntityId]) -> Vec<f64> {
        candidates
            .iter()
            .map(|&t| indicator(self.triples.contains(&Triple::new(head, relation, t))))
            .collect()
    }
    fn score_heads(&self, relation: RelationId, tail: EntityId, candidates: &[EntityId]) -> Vec<f64> {
        candidates
            .iter()
            .map(|&h| indicator(self.triples.contains(&Triple::new(h, relation, tail))))
            .collect()
    }
}

impl EaScorer for OracleScorer {
    fn score_right(&self, left: EntityId, candidates: &[EntityId]) -> Vec<f64> {
        candidates
            .iter()
            .map(|&r| indicator(self.pairs.contains(&(left, r))))
            .collect()
    }
    fn score_left(&self, right: EntityId, candidates: &[EntityId]) -> Vec<f64> {
        candidates
            .iter()
            .map(|&l| indicator(self.pairs.contains(&(l, right))))
            .collect()
    }
}

fn default_dimension() -> usize {
    16
}

/// Declarative description of a scorer, as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerSpec {
    Constant,
    Random {
        seed: u64,
    },
    Oracle,
    NoisySimilarity {
        seed: u64,
        sigma: f64,
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    Translational(TranslationalParams),
}

/// What a link prediction scorer may be built from.
#[derive(Debug, Clone, Copy)]
pub struct LpContext<'a> {
    pub num_entities: usize,
    pub num_relations: usize,
    pub train: &'a [Triple],
    /// Every triple known to be true (used by the oracle only).
    pub known: &'a [Triple],
}

impl ScorerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ScorerSpec::Constant => "constant",
            ScorerSpec::Random { .. } => "random",
            ScorerSpec::Oracle => "oracle",
            ScorerSpec::NoisySimilarity { .. } => "noisy_similarity",
            ScorerSpec::Translational(_) => "translational",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            ScorerSpec::Constant | ScorerSpec::Oracle => None,
            ScorerSpec::Random { seed } | ScorerSpec::NoisySimilarity { seed, .. } => Some(*seed),
            ScorerSpec::Translational(p) => Some(p.seed),
        }
    }

    /// Same spec with its seed replaced (no-op for deterministic kinds).
    pub fn with_seed(&self, new_seed: u64) -> Self {
        let mut s = self.clone();
        match &mut s {
            ScorerSpec::Constant | ScorerSpec::Oracle => {}
            ScorerSpec::Random { seed } | ScorerSpec::NoisySimilarity { seed, .. } => *seed = new_seed,
            ScorerSpec::Translational(p) => p.seed = new_seed,
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScorerSpec::NoisySimilarity { sigma, dimension, .. } => {
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return Err(Error::InvalidConfig(format!("sigma must be >= 0, got {sigma}")));
                }
                if *dimension == 0 {
                    return Err(Error::InvalidConfig("dimension must be positive".into()));
                }
                Ok(())
            }
            ScorerSpec::Translational(p) => p.validate(),
            _ => Ok(()),
        }
    }

    pub fn supports_lp(&self) -> bool {
        !matches!(self, ScorerSpec::NoisySimilarity { .. })
    }

    pub fn supports_ea(&self) -> bool {
        !matches!(self, ScorerSpec::Translational(_))
    }

    pub fn build_lp(&self, ctx: &LpContext<'_>) -> Result<Box<dyn LpScorer>> {
        self.validate()?;
        Ok(match self {
            ScorerSpec::Constant => Box::new(ConstantScorer),
            ScorerSpec::Random { seed } => Box::new(RandomScorer::new(*seed)),
            ScorerSpec::Oracle => Box::new(OracleScorer::for_triples(ctx.known.iter().copied())),
            ScorerSpec::Translational(p) => {
                Box::new(train_translational(ctx.train, ctx.num_entities, ctx.num_relations, p)?.scorer)
            }
            ScorerSpec::NoisySimilarity { .. } => {
                return Err(Error::InvalidConfig(
                    "noisy_similarity is an entity alignment scorer".into(),
                ))
            }
        })
    }

    /// Builds an alignment scorer; `pairs` is every aligned pair the scorer may know about.
    pub fn build_ea(&self, pairs: &[AlignedPair]) -> Result<Box<dyn EaScorer>> {
        self.validate()?;
        Ok(match self {
            ScorerSpec::Constant => Box::new(ConstantScorer),
            ScorerSpec::Random { seed } => Box::new(RandomScorer::new(*seed)),
            ScorerSpec::Oracle => Box::new(OracleScorer::for_alignment(pairs.iter().copied())),
            ScorerSpec::NoisySimilarity {
                seed,
                sigma,
                dimension,
            } => Box::new(NoisySimilarityScorer::new(pairs, *dimension, *sigma, *seed)),
            ScorerSpec::Translational(_) => {
                return Err(Error::InvalidConfig(
                    "translational is a link prediction scorer".into(),
                ))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_scores_are_reproducible_and_uniform() {
        let s = RandomScorer::new(42);
        let c: Vec<EntityId> = (0..10_000).collect();
        let a = LpScorer::score_tails(&s, 3, 1, &c);
        assert_eq!(a, LpScorer::score_tails(&s, 3, 1, &c));
        assert_ne!(a, LpScorer::score_heads(&s, 3, 1, &c));
        assert_ne!(a, LpScorer::score_tails(&RandomScorer::new(43), 3, 1, &c));
        assert!(a.iter().all(|&x| (0.0..1.0).contains(&x)));
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        // sd of the mean is 0.0029
        assert!((mean - 0.5).abs() < 0.015, "{mean}");
    }

    #[test]
    fn spec_json_shape() {
        let spec: ScorerSpec =
            serde_json::from_str(r#"{"kind":"noisy_similarity","seed":3,"sigma":0.5}"#).unwrap();
        assert_eq!(
            spec,
            ScorerSpec::NoisySimilarity {
                seed: 3,
                sigma: 0.5,
                dimension: 16
            }
        );
        assert_eq!(spec.with_seed(9).seed(), Some(9));
        let spec: ScorerSpec = serde_json::from_str(r#"{"kind":"constant"}"#).unwrap();
        assert_eq!(spec.seed(), None);
        let spec: ScorerSpec = serde_json::from_str(r#"{"kind":"translational","seed":1}"#).unwrap();
        assert_eq!(spec.kind(), "translational");
        assert!(serde_json::from_str::<ScorerSpec>(r#"{"kind":"bogus"}"#).is_err());
    }

    #[test]
    fn spec_validation_and_task_support() {
        let bad = ScorerSpec::NoisySimilarity {
            seed: 0,
            sigma: -1.0,
            dimension: 4,
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        let ctx = LpContext {
            num_entities: 2,
            num_relations: 1,
            train: &[],
            known: &[],
        };
        assert!(ScorerSpec::NoisySimilarity {
            seed: 0,
            sigma: 1.0,
            dimension: 4
        }
        .build_lp(&ctx)
        .is_err());
        assert!(ScorerSpec::Translational(TranslationalParams::default())
            .build_ea(&[])
            .is_err());
    }
}
