//! Link prediction evaluation: every test triple is ranked twice, once
//! against all entities as head and once as tail, optionally filtering out
//! other completions that are known to be true.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{check_triple, EntityId, RelationId, Triple};
use crate::metrics::{RankCollection, RankEntry, Side};
use crate::parallel::ordered_map;
use crate::rank::{rank_record, RankRecord, ScoredCandidates};

/// A link prediction model. Higher scores mean more plausible triples.
///
/// Each call receives the full candidate list for one side and must return
/// one finite score per candidate, deterministically. Implementations are
/// called concurrently.
pub trait LpScorer: Sync {
    /// Scores `(head, relation, c)` for every `c` in `candidates`.
    fn score_tails(&self, head: EntityId, relation: RelationId, candidates: &[EntityId]) -> Vec<f64>;
    /// Scores `(c, relation, tail)` for every `c` in `candidates`.
    fn score_heads(&self, relation: RelationId, tail: EntityId, candidates: &[EntityId]) -> Vec<f64>;
}

impl<S: LpScorer + ?Sized> LpScorer for Box<S> {
    fn score_tails(&self, head: EntityId, relation: RelationId, candidates: &[EntityId]) -> Vec<f64> {
        (**self).score_tails(head, relation, candidates)
    }
    fn score_heads(&self, relation: RelationId, tail: EntityId, candidates: &[EntityId]) -> Vec<f64> {
        (**self).score_heads(relation, tail, candidates)
    }
}

/// Which entity of a triple is being predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Head,
    Tail,
}

impl Target {
    pub fn side(self) -> Side {
        match self {
            Target::Head => Side::Left,
            Target::Tail => Side::Right,
        }
    }
}

/// How the two per-triple ranks enter the collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideHandling {
    /// Head and tail prediction are separate instances.
    #[default]
    Pooled,
    /// One instance per triple: ranks and candidate counts averaged over both sides.
    Averaged,
}

impl std::str::FromStr for SideHandling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(SideHandling::Pooled),
            "averaged" => Ok(SideHandling::Averaged),
            other => Err(Error::invalid(format!("unknown side handling '{other}'"))),
        }
    }
}

/// Known-true completions, grouped for both prediction directions.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    num_entities: usize,
    tails: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    heads: HashMap<(RelationId, EntityId), Vec<EntityId>>,
}

impl FilterIndex {
    /// Indexes the union of `splits` (set semantics; duplicates are stored once).
    pub fn build(splits: &[&[Triple]], num_entities: usize, num_relations: usize) -> Result<Self> {
        let mut tails: HashMap<(EntityId, RelationId), BTreeSet<EntityId>> = HashMap::new();
        let mut heads: HashMap<(RelationId, EntityId), BTreeSet<EntityId>> = HashMap::new();
        for t in splits.iter().flat_map(|s| s.iter()) {
            check_triple(t, num_entities, num_relations)?;
            tails.entry((t.head, t.relation)).or_default().insert(t.tail);
            heads.entry((t.relation, t.tail)).or_default().insert(t.head);
        }
        let flatten = |m: HashMap<_, BTreeSet<EntityId>>| {
            m.into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect()
        };
        Ok(Self {
            num_entities,
            tails: flatten(tails),
            heads: flatten(heads),
        })
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    /// Known tails for `(head, relation)`, sorted.
    pub fn known_tails(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.tails.get(&(head, relation)).map_or(&[], Vec::as_slice)
    }

    /// Known heads for `(relation, tail)`, sorted.
    pub fn known_heads(&self, relation: RelationId, tail: EntityId) -> &[EntityId] {
        self.heads.get(&(relation, tail)).map_or(&[], Vec::as_slice)
    }

    pub fn num_tail_keys(&self) -> usize {
        self.tails.len()
    }

    pub fn num_head_keys(&self) -> usize {
        self.heads.len()
    }

    fn known(&self, triple: &Triple, target: Target) -> &[EntityId] {
        match target {
            Target::Head => self.known_heads(triple.relation, triple.tail),
            Target::Tail => self.known_tails(triple.head, triple.relation),
        }
    }
}

fn true_entity(triple: &Triple, target: Target) -> EntityId {
    match target {
        Target::Head => triple.head,
        Target::Tail => triple.tail,
    }
}

/// Mask over all entities (`true` = excluded) for one prediction side.
///
/// With `filtered` set, every known-true entity for the triple's key is
/// masked except the triple's own answer; otherwise nothing is masked.
pub fn candidate_mask(fi: &FilterIndex, triple: &Triple, target: Target, filtered: bool) -> Result<Vec<bool>> {
    let n = fi.num_entities;
    if triple.head as usize >= n || triple.tail as usize >= n {
        return Err(Error::invalid(format!(
            "triple {triple:?} references an entity outside the vocabulary of {n}"
        )));
    }
    let mut mask = vec![false; n];
    if filtered {
        let own = true_entity(triple, target);
        for &e in fi.known(triple, target) {
            if e != own {
                mask[e as usize] = true;
            }
        }
    }
    Ok(mask)
}

pub(crate) fn check_scores(scores: &[f64], expected: usize, what: &str) -> Result<()> {
    if scores.len() != expected {
        return Err(Error::ScorerContract(format!(
            "{what}: expected {expected} scores, got {}",
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::ScorerContract(format!(
            "{what}: non-finite score {} for candidate {i}",
            scores[i]
        )));
    }
    Ok(())
}

fn evaluate_side<S: LpScorer + ?Sized>(
    scorer: &S,
    triple: &Triple,
    fi: &FilterIndex,
    filtered: bool,
    target: Target,
    candidates: &[EntityId],
) -> Result<RankRecord> {
    let scores = match target {
        Target::Head => scorer.score_heads(triple.relation, triple.tail, candidates),
        Target::Tail => scorer.score_tails(triple.head, triple.relation, candidates),
    };
    check_scores(&scores, candidates.len(), &format!("{target:?} prediction for {triple:?}"))?;
    let true_index = true_entity(triple, target) as usize;
    let record = if filtered {
        let mask = candidate_mask(fi, triple, target, true)?;
        rank_record(&ScoredCandidates::with_mask(&scores, true_index, &mask)?)
    } else {
        rank_record(&ScoredCandidates::new(&scores, true_index)?)
    };
    Ok(record)
}

fn all_entities(n: usize) -> Vec<EntityId> {
    (0..n as EntityId).collect()
}

/// Ranks for head prediction and tail prediction of one triple.
pub fn evaluate_triple<S: LpScorer + ?Sized>(
    scorer: &S,
    triple: &Triple,
    fi: &FilterIndex,
    filtered: bool,
) -> Result<(RankRecord, RankRecord)> {
    evaluate_triple_with(scorer, triple, fi, filtered, &all_entities(fi.num_entities))
}

fn evaluate_triple_with<S: LpScorer + ?Sized>(
    scorer: &S,
    triple: &Triple,
    fi: &FilterIndex,
    filtered: bool,
    candidates: &[EntityId],
) -> Result<(RankRecord, RankRecord)> {
    if triple.head as usize >= candidates.len() || triple.tail as usize >= candidates.len() {
        return Err(Error::invalid(format!(
            "triple {triple:?} references an entity outside the vocabulary of {}",
            candidates.len()
        )));
    }
    let head = evaluate_side(scorer, triple, fi, filtered, Target::Head, candidates)?;
    let tail = evaluate_side(scorer, triple, fi, filtered, Target::Tail, candidates)?;
    Ok((head, tail))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LpOptions {
    pub filtered: bool,
    pub side_handling: SideHandling,
    pub threads: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            filtered: true,
            side_handling: SideHandling::Pooled,
            threads: 1,
        }
    }
}

/// Evaluates all `test` triples; output order follows `test`.
///
/// Pooled mode emits a head record then a tail record per triple; averaged
/// mode emits one record per triple.
pub fn evaluate_lp<S: LpScorer + ?Sized>(
    scorer: &S,
    test: &[Triple],
    fi: &FilterIndex,
    opts: &LpOptions,
) -> Result<RankCollection> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let candidates = all_entities(fi.num_entities);
    let pairs = ordered_map(test, opts.threads, |t| {
        evaluate_triple_with(scorer, t, fi, opts.filtered, &candidates)
    })?;
    let mut rc = RankCollection::new();
    for (head, tail) in pairs {
        match opts.side_handling {
            SideHandling::Pooled => {
                rc.push(head.into(), Some(Side::Left));
                rc.push(tail.into(), Some(Side::Right));
            }
            SideHandling::Averaged => rc.push(RankEntry::averaged(head, tail), Some(Side::Both)),
        }
    }
    Ok(rc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::KnowledgeGraph;
    use crate::metrics::adjusted_mean_rank_index;
    use crate::rank::RankVariant;

    /// a, b, c, d and relations r, s as in the small illustration graph.
    fn toy() -> KnowledgeGraph {
        KnowledgeGraph::from_labelled(&[
            ("b", "r", "a"),
            ("a", "s", "b"),
            ("a", "s", "c"),
            ("a", "s", "d"),
        ])
    }

    struct Constant;
    impl LpScorer for Constant {
        fn score_tails(&self, _: EntityId, _: RelationId, c: &[EntityId]) -> Vec<f64> {
            vec![0.0; c.len()]
        }
        fn score_heads(&self, _: RelationId, _: EntityId, c: &[EntityId]) -> Vec<f64> {
            vec![0.0; c.len()]
        }
    }

    /// Scores 1 for triples in the set, 0 otherwise.
    struct Oracle(std::collections::HashSet<Triple>);
    impl LpScorer for Oracle {
        fn score_tails(&self, h: EntityId, r: RelationId, c: &[EntityId]) -> Vec<f64> {
            c.iter()
                .map(|&t| self.0.contains(&Triple::new(h, r, t)) as u8 as f64)
                .collect()
        }
        fn score_heads(&self, r: RelationId, t: EntityId, c: &[EntityId]) -> Vec<f64> {
            c.iter()
                .map(|&h| self.0.contains(&Triple::new(h, r, t)) as u8 as f64)
                .collect()
        }
    }

    struct Broken(usize, f64);
    impl LpScorer for Broken {
        fn score_tails(&self, _: EntityId, _: RelationId, _: &[EntityId]) -> Vec<f64> {
            vec![self.1; self.0]
        }
        fn score_heads(&self, _: RelationId, _: EntityId, _: &[EntityId]) -> Vec<f64> {
            vec![self.1; self.0]
        }
    }

    fn id(kg: &KnowledgeGraph, h: &str, r: &str, t: &str) -> Triple {
        Triple::new(
            kg.entities.id(h).unwrap(),
            kg.relations.id(r).unwrap(),
            kg.entities.id(t).unwrap(),
        )
    }

    #[test]
    fn toy_filter_index() {
        let kg = toy();
        let fi = FilterIndex::build(&[kg.triples()], 4, 2).unwrap();
        let e = |l| kg.entities.id(l).unwrap();
        let rel = |l| kg.relations.id(l).unwrap();
        assert_eq!(fi.known_tails(e("a"), rel("s")), &[e("b"), e("c"), e("d")]);
        assert_eq!(fi.known_tails(e("b"), rel("r")), &[e("a")]);
        assert_eq!(fi.known_heads(rel("s"), e("c")), &[e("a")]);
    }

    #[test]
    fn empty_and_duplicate_splits() {
        let fi = FilterIndex::build(&[], 3, 1).unwrap();
        assert_eq!(fi.num_tail_keys(), 0);
        assert_eq!(fi.num_head_keys(), 0);

        let t = [Triple::new(0, 0, 1)];
        let fi = FilterIndex::build(&[&t, &t], 3, 1).unwrap();
        assert_eq!(fi.known_tails(0, 0), &[1]);

        assert!(FilterIndex::build(&[&[Triple::new(0, 0, 3)]], 3, 1).is_err());
    }

    #[test]
    fn toy_masks() {
        let kg = toy();
        let fi = FilterIndex::build(&[kg.triples()], 4, 2).unwrap();
        let asb = id(&kg, "a", "s", "b");
        let mask = candidate_mask(&fi, &asb, Target::Tail, true).unwrap();
        let masked: Vec<&str> = (0..4)
            .filter(|&i| mask[i])
            .map(|i| kg.entities.label(i as u32).unwrap())
            .collect();
        assert_eq!(masked, ["c", "d"]);

        let bra = id(&kg, "b", "r", "a");
        assert!(candidate_mask(&fi, &bra, Target::Tail, true)
            .unwrap()
            .iter()
            .all(|m| !m));
        assert!(candidate_mask(&fi, &asb, Target::Tail, false)
            .unwrap()
            .iter()
            .all(|m| !m));
    }

    #[test]
    fn constant_scorer_on_toy() {
        let kg = toy();
        let fi = FilterIndex::build(&[kg.triples()], 4, 2).unwrap();
        let asb = id(&kg, "a", "s", "b");
        let (_, tail) = evaluate_triple(&Constant, &asb, &fi, true).unwrap();
        assert_eq!(tail.candidate_count, 2);
        assert_eq!(tail.realistic(), 1.5);
        let (_, tail) = evaluate_triple(&Constant, &asb, &fi, false).unwrap();
        assert_eq!(tail.candidate_count, 4);
        assert_eq!(tail.realistic(), 2.5);
    }

    #[test]
    fn oracle_ranks_first() {
        let kg = toy();
        let fi = FilterIndex::build(&[kg.triples()], 4, 2).unwrap();
        let oracle = Oracle(kg.triples().iter().copied().collect());
        let opts = LpOptions::default();
        let rc = evaluate_lp(&oracle, kg.triples(), &fi, &opts).unwrap();
        assert_eq!(rc.len(), 8);
        assert!(rc.ranks(RankVariant::Pessimistic).iter().all(|&r| r == 1.0));
        assert_eq!(adjusted_mean_rank_index(&rc).unwrap(), 1.0);

        let rc = evaluate_lp(&Constant, kg.triples(), &fi, &opts).unwrap();
        assert_eq!(adjusted_mean_rank_index(&rc).unwrap(), 0.0);
    }

    #[test]
    fn pooled_and_averaged() {
        let kg = toy();
        let fi = FilterIndex::build(&[kg.triples()], 4, 2).unwrap();
        let test = &kg.triples()[..2];
        let pooled = evaluate_lp(&Constant, test, &fi, &LpOptions::default()).unwrap();
        assert_eq!(pooled.len(), 4);
        let averaged = evaluate_lp(
            &Constant,
            test,
            &fi,
            &LpOptions {
                side_handling: SideHandling::Averaged,
                ..LpOptions::default()
            },
        )
        .unwrap();
        assert_eq!(averaged.len(), 2);
        assert_eq!(averaged.side(0), Some(Side::Both));
    }

    #[test]
    fn averaged_rank_of_one_and_three() {
        // tail side strict rank 1, head side strict rank 3
        struct Fixed;
        impl LpScorer for Fixed {
            fn score_tails(&self, _: EntityId, _: RelationId, c: &[EntityId]) -> Vec<f64> {
                c.iter().map(|&e| if e == 1 { 9.0 } else { e as f64 }).collect()
            }
            fn score_heads(&self, _: RelationId, _: EntityId, c: &[EntityId]) -> Vec<f64> {
                c.iter().map(|&e| e as f64).collect()
            }
        }
        let fi = FilterIndex::build(&[], 4, 1).unwrap();
        let t = [Triple::new(1, 0, 1)];
        let rc = evaluate_lp(
            &Fixed,
            &t,
            &fi,
            &LpOptions {
                filtered: false,
                side_handling: SideHandling::Averaged,
                threads: 1,
            },
        )
        .unwrap();
        assert_eq!(rc.entries()[0].rank(RankVariant::Realistic), 2.0);
    }

    #[test]
    fn scorer_contract() {
        let fi = FilterIndex::build(&[], 3, 1).unwrap();
        let t = Triple::new(0, 0, 1);
        assert!(matches!(
            evaluate_triple(&Broken(2, 0.0), &t, &fi, false),
            Err(Error::ScorerContract(_))
        ));
        assert!(matches!(
            evaluate_triple(&Broken(3, f64::NAN), &t, &fi, false),
            Err(Error::ScorerContract(_))
        ));
        assert!(evaluate_triple(&Constant, &Triple::new(0, 0, 5), &fi, false).is_err());
        assert!(evaluate_lp(&Constant, &[], &fi, &LpOptions::default()).is_err());
    }

    #[test]
    fn unparsable_side_handling() {
        assert_eq!("averaged".parse::<SideHandling>().unwrap(), SideHandling::Averaged);
        assert!("both".parse::<SideHandling>().is_err());
    }
}
