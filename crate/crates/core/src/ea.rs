//! Entity alignment evaluation.
//!
//! Candidates for a query are only the entities that occur in some pair of
//! the evaluated alignment, so the candidate-set size is tied to the size of
//! the evaluation set. [`test_size_sweep`] measures exactly that effect.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::lp::check_scores;
use crate::metrics::{six_sig, summarize, MetricReport, RankCollection, Side};
use crate::parallel::ordered_map;
use crate::rank::{rank_record, RankRecord, RankVariant, ScoredCandidates};
use crate::stats::{spearman, Spearman};

/// `(left entity, right entity)`.
pub type AlignedPair = (EntityId, EntityId);

/// An entity alignment model; higher scores mean a more likely match.
pub trait EaScorer: Sync {
    /// Scores `(left, c)` for each right candidate `c`.
    fn score_right(&self, left: EntityId, candidates: &[EntityId]) -> Vec<f64>;
    /// Scores `(c, right)` for each left candidate `c`.
    fn score_left(&self, right: EntityId, candidates: &[EntityId]) -> Vec<f64>;
}

impl<S: EaScorer + ?Sized> EaScorer for Box<S> {
    fn score_right(&self, left: EntityId, candidates: &[EntityId]) -> Vec<f64> {
        (**self).score_right(left, candidates)
    }
    fn score_left(&self, right: EntityId, candidates: &[EntityId]) -> Vec<f64> {
        (**self).score_left(right, candidates)
    }
}

/// Aligned pairs split into disjoint train and test parts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignmentSet {
    train: Vec<AlignedPair>,
    test: Vec<AlignedPair>,
}

impl AlignmentSet {
    /// Both parts are sorted and deduplicated; they must not overlap.
    pub fn new(mut train: Vec<AlignedPair>, mut test: Vec<AlignedPair>) -> Result<Self> {
        train.sort_unstable();
        train.dedup();
        test.sort_unstable();
        test.dedup();
        let train_set: HashSet<&AlignedPair> = train.iter().collect();
        if let Some(p) = test.iter().find(|p| train_set.contains(p)) {
            return Err(Error::invalid(format!(
                "pair {p:?} is in both train and test alignment"
            )));
        }
        Ok(Self { train, test })
    }

    /// Every pair in the test part.
    pub fn all_test(pairs: Vec<AlignedPair>) -> Self {
        Self::new(Vec::new(), pairs).expect("empty train part cannot overlap")
    }

    pub fn train(&self) -> &[AlignedPair] {
        &self.train
    }

    pub fn test(&self) -> &[AlignedPair] {
        &self.test
    }

    /// Sorted union of train and test.
    pub fn pairs(&self) -> Vec<AlignedPair> {
        let mut all: Vec<AlignedPair> = self.train.iter().chain(&self.test).copied().collect();
        all.sort_unstable();
        all
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_vocabularies(&self, n_left: usize, n_right: usize) -> Result<()> {
        for &(l, r) in self.train.iter().chain(&self.test) {
            if l as usize >= n_left || r as usize >= n_right {
                return Err(Error::invalid(format!(
                    "aligned pair ({l}, {r}) outside vocabularies of sizes {n_left}/{n_right}"
                )));
            }
        }
        Ok(())
    }
}

/// Sorted, distinct left and right entities occurring in `test`.
pub fn build_candidate_sets(test: &[AlignedPair]) -> Result<(Vec<EntityId>, Vec<EntityId>)> {
    if test.is_empty() {
        return Err(Error::invalid("empty evaluation alignment"));
    }
    let left: BTreeSet<EntityId> = test.iter().map(|p| p.0).collect();
    let right: BTreeSet<EntityId> = test.iter().map(|p| p.1).collect();
    Ok((left.into_iter().collect(), right.into_iter().collect()))
}

fn rank_in(candidates: &[EntityId], truth: EntityId, scores: &[f64], what: &str) -> Result<RankRecord> {
    check_scores(scores, candidates.len(), what)?;
    let idx = candidates
        .binary_search(&truth)
        .expect("true entity is in its own candidate set");
    Ok(rank_record(&ScoredCandidates::new(scores, idx)?))
}

/// Ranks every test pair in both directions.
///
/// For pair `i` the collection holds a left→right record (tagged
/// [`Side::Right`]) followed by a right→left record ([`Side::Left`]).
/// Alternative true matches of many-to-many alignments are not filtered.
pub fn evaluate_ea<S: EaScorer + ?Sized>(scorer: &S, test: &[AlignedPair], threads: usize) -> Result<RankCollection> {
    let (left, right) = build_candidate_sets(test)?;
    let records = ordered_map(test, threads, |&(l, r)| {
        let to_right = scorer.score_right(l, &right);
        let a = rank_in(&right, r, &to_right, &format!("right candidates for left {l}"))?;
        let to_left = scorer.score_left(r, &left);
        let b = rank_in(&left, l, &to_left, &format!("left candidates for right {r}"))?;
        Ok((a, b))
    })?;
    let mut rc = RankCollection::new();
    for (a, b) in records {
        rc.push(a.into(), Some(Side::Right));
        rc.push(b.into(), Some(Side::Left));
    }
    Ok(rc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub train_fractions: Vec<f64>,
    pub eval_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_ks")]
    pub ks: Vec<u64>,
    #[serde(default)]
    pub variant: RankVariant,
}

pub(crate) fn default_ks() -> Vec<u64> {
    vec![1, 3, 10]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub train_fraction: f64,
    pub train_size: usize,
    pub eval_size: usize,
    pub seed: u64,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// What a scorer factory gets to see for one sweep cell.
pub struct SweepCell<'a> {
    pub train: &'a [AlignedPair],
    pub test: &'a [AlignedPair],
    pub seed: u64,
}

fn train_size(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round() as usize
}

impl SweepConfig {
    /// Checks the grid against an alignment of `n_pairs` pairs.
    pub fn validate(&self, n_pairs: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.train_fractions.is_empty() || self.eval_sizes.is_empty() || self.seeds.is_empty() {
            return bad("sweep needs at least one train fraction, eval size and seed".into());
        }
        if let Some(f) = self.train_fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return bad(format!("train fraction {f} outside [0, 1]"));
        }
        if self.ks.contains(&0) {
            return bad("ks must be positive".into());
        }
        let mut sizes: Vec<usize> = self.train_fractions.iter().map(|&f| train_size(f, n_pairs)).collect();
        sizes.sort_unstable();
        if sizes.windows(2).any(|w| w[0] == w[1]) {
            return bad("two train fractions give the same train size".into());
        }
        let mut eval = self.eval_sizes.clone();
        eval.sort_unstable();
        if eval.windows(2).any(|w| w[0] == w[1]) || eval[0] == 0 {
            return bad("eval sizes must be positive and distinct".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return bad("seeds must be distinct".into());
        }
        let max_eval = *eval.last().unwrap();
        for &f in &self.train_fractions {
            let available = n_pairs - train_size(f, n_pairs);
            if max_eval > available {
                return bad(format!(
                    "eval size {max_eval} exceeds the {available} test pairs left by train fraction {f}"
                ));
            }
        }
        Ok(())
    }
}

/// Train/evaluate grid over train fractions, seeds and evaluation sizes.
///
/// For each `(fraction, seed)` the alignment is shuffled with `seed`; the
/// first `round(fraction * n)` pairs become the training part and the
/// factory builds one scorer from it. That scorer is evaluated on prefixes of
/// the remaining pairs, so smaller evaluation sets are subsets of larger ones.
pub fn test_size_sweep<F>(
    factory: F,
    alignment: &[AlignedPair],
    config: &SweepConfig,
    threads: usize,
) -> Result<SweepResult>
where
    F: Fn(&SweepCell<'_>) -> Result<Box<dyn EaScorer>>,
{
    let mut pairs = alignment.to_vec();
    pairs.sort_unstable();
    pairs.dedup();
    config.validate(pairs.len())?;

    let mut rows = Vec::new();
    for &fraction in &config.train_fractions {
        let n_train = train_size(fraction, pairs.len());
        for &seed in &config.seeds {
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let (train, test) = shuffled.split_at(n_train);
            let scorer = factory(&SweepCell { train, test, seed })?;
            for &size in &config.eval_sizes {
                let rc = evaluate_ea(&scorer, &test[..size], threads)?;
                rows.push(SweepRow {
                    train_fraction: fraction,
                    train_size: n_train,
                    eval_size: size,
                    seed,
                    report: summarize(&rc, &config.ks, config.variant)?,
                });
            }
        }
    }
    Ok(SweepResult { rows })
}

impl SweepResult {
    /// Long format: one line per `(cell, metric)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("train_fraction,train_size,eval_size,seed,variant,metric,value\n");
        for row in &self.rows {
            let r = &row.report;
            let mut metrics: Vec<(String, f64)> = vec![
                ("mean_rank".into(), r.mean_rank),
                ("mrr".into(), r.mrr),
                ("expected_mean_rank".into(), r.expected_mean_rank),
                ("amr".into(), r.amr),
                ("amri".into(), r.amri),
            ];
            metrics.extend(r.hits_at_k.iter().map(|(k, v)| (format!("hits_at_{k}"), *v)));
            for (name, value) in metrics {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    row.train_fraction,
                    row.train_size,
                    row.eval_size,
                    row.seed,
                    r.variant,
                    name,
                    six_sig(value)
                );
            }
        }
        out
    }

    /// Rows for one `(train_fraction, eval_size)` cell across seeds.
    pub fn cell(&self, train_fraction: f64, eval_size: usize) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.train_fraction == train_fraction && r.eval_size == eval_size)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreePair {
    pub left: EntityId,
    pub right: EntityId,
    pub left_degree: u64,
    pub right_degree: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeAnalysis {
    pub pairs: Vec<DegreePair>,
    pub spearman: Spearman,
}

/// Degrees (incident triples) of both ends of every aligned pair, plus
/// their Spearman correlation.
pub fn degree_profile(left: &KnowledgeGraph, right: &KnowledgeGraph, alignment: &AlignmentSet) -> Result<DegreeAnalysis> {
    alignment.check_vocabularies(left.num_entities(), right.num_entities())?;
    let (dl, dr) = (left.degrees(), right.degrees());
    let pairs: Vec<DegreePair> = alignment
        .pairs()
        .into_iter()
        .map(|(l, r)| DegreePair {
            left: l,
            right: r,
            left_degree: dl[l as usize],
            right_degree: dr[r as usize],
        })
        .collect();
    let x: Vec<f64> = pairs.iter().map(|p| p.left_degree as f64).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.right_degree as f64).collect();
    let spearman = spearman(&x, &y)?;
    Ok(DegreeAnalysis { pairs, spearman })
}

impl DegreeAnalysis {
    /// `left,right,left_degree,right_degree`, entities by label.
    pub fn to_csv(&self, left: &KnowledgeGraph, right: &KnowledgeGraph) -> String {
        let mut out = String::from("left,right,left_degree,right_degree\n");
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                csv_field(left.entities.label(p.left).unwrap_or("")),
                csv_field(right.entities.label(p.right).unwrap_or("")),
                p.left_degree,
                p.right_degree
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Triple, Vocabulary};
    use crate::metrics::adjusted_mean_rank_index;

    struct Constant;
    impl EaScorer for Constant {
        fn score_right(&self, _: EntityId, c: &[EntityId]) -> Vec<f64> {
            vec![0.0; c.len()]
        }
        fn score_left(&self, _: EntityId, c: &[EntityId]) -> Vec<f64> {
            vec![0.0; c.len()]
        }
    }

    /// Identity alignment oracle: i matches i.
    struct Identity;
    impl EaScorer for Identity {
        fn score_right(&self, l: EntityId, c: &[EntityId]) -> Vec<f64> {
            c.iter().map(|&r| (r == l) as u8 as f64).collect()
        }
        fn score_left(&self, r: EntityId, c: &[EntityId]) -> Vec<f64> {
            c.iter().map(|&l| (r == l) as u8 as f64).collect()
        }
    }

    #[test]
    fn candidate_sets() {
        let (l, r) = build_candidate_sets(&[(1, 11), (2, 12)]).unwrap();
        assert_eq!((l, r), (vec![1, 2], vec![11, 12]));
        let (l, r) = build_candidate_sets(&[(3, 7), (1, 7)]).unwrap();
        assert_eq!((l, r), (vec![1, 3], vec![7]));
        assert!(build_candidate_sets(&[]).is_err());
    }

    #[test]
    fn constant_and_oracle() {
        let test: Vec<AlignedPair> = (0..10).map(|i| (i, i)).collect();
        let rc = evaluate_ea(&Constant, &test, 1).unwrap();
        assert_eq!(rc.len(), 20);
        assert!(rc.ranks(RankVariant::Realistic).iter().all(|&r| r == 5.5));
        assert!(rc.candidate_counts().iter().all(|&c| c == 10.0));
        assert_eq!(adjusted_mean_rank_index(&rc).unwrap(), 0.0);

        let rc = evaluate_ea(&Identity, &test, 1).unwrap();
        assert!(rc.ranks(RankVariant::Pessimistic).iter().all(|&r| r == 1.0));
        assert_eq!(adjusted_mean_rank_index(&rc).unwrap(), 1.0);
    }

    #[test]
    fn alignment_set_invariants() {
        let a = AlignmentSet::new(vec![(0, 0), (0, 0)], vec![(1, 1)]).unwrap();
        assert_eq!(a.train(), &[(0, 0)]);
        assert_eq!(a.pairs(), vec![(0, 0), (1, 1)]);
        assert!(AlignmentSet::new(vec![(0, 0)], vec![(0, 0)]).is_err());
        assert!(a.check_vocabularies(2, 2).is_ok());
        assert!(a.check_vocabularies(1, 2).is_err());
    }

    #[test]
    fn sweep_grid_and_validation() {
        let pairs: Vec<AlignedPair> = (0..100).map(|i| (i, i)).collect();
        let cfg = SweepConfig {
            train_fractions: vec![0.0, 0.3],
            eval_sizes: vec![10, 20, 40],
            seeds: vec![1, 2, 3, 4, 5],
            ks: vec![1],
            variant: RankVariant::Realistic,
        };
        let res = test_size_sweep(|_| Ok(Box::new(Identity)), &pairs, &cfg, 1).unwrap();
        assert_eq!(res.rows.len(), 30);
        assert!(res.rows.iter().all(|r| r.report.amri == 1.0 && r.report.mean_rank == 1.0));
        assert_eq!(res.cell(0.3, 20).len(), 5);
        assert!(res.rows.iter().any(|r| r.train_size == 30));

        let csv = res.to_csv();
        assert_eq!(csv.lines().count(), 1 + 30 * 6);

        let too_big = SweepConfig {
            eval_sizes: vec![80],
            ..cfg.clone()
        };
        assert!(matches!(
            test_size_sweep(|_| Ok(Box::new(Identity)), &pairs, &too_big, 1),
            Err(Error::InvalidConfig(_))
        ));
        let dup = SweepConfig {
            seeds: vec![1, 1],
            ..cfg.clone()
        };
        assert!(dup.validate(100).is_err());
        let bad_fraction = SweepConfig {
            train_fractions: vec![1.5],
            ..cfg
        };
        assert!(bad_fraction.validate(100).is_err());
    }

    #[test]
    fn sweep_subsets_are_nested() {
        let pairs: Vec<AlignedPair> = (0..50).map(|i| (i, i + 100)).collect();
        let cfg = SweepConfig {
            train_fractions: vec![0.2],
            eval_sizes: vec![5, 10, 20],
            seeds: vec![7],
            ks: vec![],
            variant: RankVariant::Realistic,
        };
        let seen = std::sync::Mutex::new(Vec::new());
        test_size_sweep(
            |cell| {
                seen.lock().unwrap().push((cell.train.to_vec(), cell.test.to_vec()));
                Ok(Box::new(Constant))
            },
            &pairs,
            &cfg,
            1,
        )
        .unwrap();
        let seen = seen.into_inner().unwrap();
        assert_eq!(seen.len(), 1);
        let (train, test) = &seen[0];
        assert_eq!(train.len(), 10);
        assert_eq!(test.len(), 40);
        assert!(train.iter().all(|p| !test.contains(p)));
    }

    #[test]
    fn degrees_identical_graphs() {
        let triples = vec![
            Triple::new(0, 0, 1),
            Triple::new(0, 0, 2),
            Triple::new(0, 0, 3),
            Triple::new(1, 0, 2),
        ];
        let kg = KnowledgeGraph::new(Vocabulary::numbered(4), Vocabulary::numbered(1), triples).unwrap();
        let a = AlignmentSet::all_test((0..4).map(|i| (i, i)).collect());
        let d = degree_profile(&kg, &kg, &a).unwrap();
        assert_eq!(d.spearman.rho, 1.0);
        assert_eq!(d.pairs[0].left_degree, 3);
        assert!(d.to_csv(&kg, &kg).starts_with("left,right,left_degree,right_degree\n0,0,3,3\n"));
    }

    #[test]
    fn degrees_reversed() {
        // entity i gets degree i + 1 on the left and 3 - i on the right, via hub 3
        let star = |deg: [u32; 3]| {
            let triples = (0..3u32)
                .flat_map(|e| (0..deg[e as usize]).map(move |r| Triple::new(e, r, 3)))
                .collect();
            KnowledgeGraph::new(Vocabulary::numbered(4), Vocabulary::numbered(3), triples).unwrap()
        };
        let left = star([1, 2, 3]);
        let right = star([3, 2, 1]);
        let a = AlignmentSet::all_test((0..3).map(|i| (i, i)).collect());
        let d = degree_profile(&left, &right, &a).unwrap();
        assert_eq!(d.spearman.rho, -1.0);
        assert_eq!(d.pairs[2].left_degree, 3);
        assert_eq!(d.pairs[2].right_degree, 1);
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"x\""), "\"say \"\"x\"\"\"");
    }
}
