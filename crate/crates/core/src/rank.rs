//! Rank of a true candidate within a scored candidate list.
//!
//! Four tie-handling rules are supported:
//!
//! * optimistic: the true candidate is placed first among equal scores,
//! * pessimistic: it is placed last among equal scores,
//! * realistic: the mean of the two, i.e. the average over every position
//!   the true candidate can take without violating the sort order,
//! * non-deterministic: position under an explicit, caller-supplied tie order.
//!
//! Ties are exact (bit-equal) score equality. All deterministic variants are
//! computed by a single counting scan; nothing is sorted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores for one test instance together with the position of the true
/// candidate and an optional filter mask (`true` = excluded).
#[derive(Debug, Clone, Copy)]
pub struct ScoredCandidates<'a> {
    scores: &'a [f64],
    true_index: usize,
    mask: Option<&'a [bool]>,
}

impl<'a> ScoredCandidates<'a> {
    pub fn new(scores: &'a [f64], true_index: usize) -> Result<Self> {
        Self::build(scores, true_index, None)
    }

    pub fn with_mask(scores: &'a [f64], true_index: usize, mask: &'a [bool]) -> Result<Self> {
        Self::build(scores, true_index, Some(mask))
    }

    fn build(scores: &'a [f64], true_index: usize, mask: Option<&'a [bool]>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid("empty candidate list"));
        }
        if true_index >= scores.len() {
            return Err(Error::invalid(format!(
                "true_index {true_index} out of bounds for {} candidates",
                scores.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite score {} at index {i}",
                scores[i]
            )));
        }
        if let Some(mask) = mask {
            if mask.len() != scores.len() {
                return Err(Error::invalid(format!(
                    "mask length {} does not match {} candidates",
                    mask.len(),
                    scores.len()
                )));
            }
            if mask[true_index] {
                return Err(Error::invalid("true candidate is masked"));
            }
        }
        Ok(Self {
            scores,
            true_index,
            mask,
        })
    }

    pub fn scores(&self) -> &'a [f64] {
        self.scores
    }

    pub fn true_index(&self) -> usize {
        self.true_index
    }

    pub fn true_score(&self) -> f64 {
        self.scores[self.true_index]
    }

    fn is_masked(&self, i: usize) -> bool {
        self.mask.is_some_and(|m| m[i])
    }

    /// Indices of unmasked candidates.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.scores.len()).filter(move |&i| !self.is_masked(i))
    }

    /// Unmasked candidates whose score equals the true score (including the true one).
    pub fn tied_indices(&self) -> Vec<usize> {
        let alpha = self.true_score();
        self.active().filter(|&i| self.scores[i] == alpha).collect()
    }

    /// `(strictly greater, greater or equal, unmasked count)` in one pass.
    fn counts(&self) -> (u64, u64, u64) {
        let alpha = self.true_score();
        let (mut gt, mut ge, mut n) = (0u64, 0u64, 0u64);
        match self.mask {
            None => {
                for &s in self.scores {
                    gt += (s > alpha) as u64;
                    ge += (s >= alpha) as u64;
                }
                n = self.scores.len() as u64;
            }
            Some(mask) => {
                for (&s, &m) in self.scores.iter().zip(mask) {
                    if !m {
                        gt += (s > alpha) as u64;
                        ge += (s >= alpha) as u64;
                        n += 1;
                    }
                }
            }
        }
        (gt, ge, n)
    }
}

/// Deterministic rank variants for one instance.
///
/// The realistic rank is a half-integer; it is kept exact as
/// `optimistic + pessimistic` (twice its value).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RankRecord {
    pub optimistic: u64,
    pub pessimistic: u64,
    pub candidate_count: u64,
}

impl RankRecord {
    /// Builds a record, checking `1 <= optimistic <= pessimistic <= candidate_count`.
    pub fn new(optimistic: u64, pessimistic: u64, candidate_count: u64) -> Result<Self> {
        if !(1 <= optimistic && optimistic <= pessimistic && pessimistic <= candidate_count) {
            return Err(Error::invalid(format!(
                "inconsistent rank record: optimistic {optimistic}, pessimistic {pessimistic}, candidates {candidate_count}"
            )));
        }
        Ok(Self {
            optimistic,
            pessimistic,
            candidate_count,
        })
    }

    /// Twice the realistic rank.
    pub fn realistic_x2(&self) -> u64 {
        self.optimistic + self.pessimistic
    }

    pub fn realistic(&self) -> f64 {
        self.realistic_x2() as f64 / 2.0
    }

    pub fn rank(&self, variant: RankVariant) -> f64 {
        match variant {
            RankVariant::Optimistic => self.optimistic as f64,
            RankVariant::Pessimistic => self.pessimistic as f64,
            RankVariant::Realistic => self.realistic(),
        }
    }
}

/// Which deterministic rank definition an aggregate is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankVariant {
    Optimistic,
    Pessimistic,
    #[default]
    Realistic,
}

impl RankVariant {
    pub const ALL: [RankVariant; 3] = [
        RankVariant::Optimistic,
        RankVariant::Pessimistic,
        RankVariant::Realistic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RankVariant::Optimistic => "optimistic",
            RankVariant::Pessimistic => "pessimistic",
            RankVariant::Realistic => "realistic",
        }
    }
}

impl std::fmt::Display for RankVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RankVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimistic" => Ok(RankVariant::Optimistic),
            "pessimistic" => Ok(RankVariant::Pessimistic),
            "realistic" => Ok(RankVariant::Realistic),
            other => Err(Error::invalid(format!("unknown rank variant '{other}'"))),
        }
    }
}

/// Number of unmasked candidates scoring strictly higher than the true one, plus one.
pub fn optimistic_rank(sc: &ScoredCandidates<'_>) -> u64 {
    sc.counts().0 + 1
}

/// Number of unmasked candidates scoring at least as high as the true one.
pub fn pessimistic_rank(sc: &ScoredCandidates<'_>) -> u64 {
    sc.counts().1
}

/// Mean of optimistic and pessimistic rank.
pub fn realistic_rank(sc: &ScoredCandidates<'_>) -> f64 {
    rank_record(sc).realistic()
}

/// Position of the true candidate when ties at its score are broken by `tie_order`.
///
/// `tie_order` must be a permutation of [`ScoredCandidates::tied_indices`].
/// This exists to show how much an arbitrary sort can move a rank; the
/// aggregate metrics never use it.
pub fn nondeterministic_rank(sc: &ScoredCandidates<'_>, tie_order: &[usize]) -> Result<u64> {
    let mut tied = sc.tied_indices();
    let mut given = tie_order.to_vec();
    given.sort_unstable();
    tied.sort_unstable();
    if given != tied {
        return Err(Error::invalid(format!(
            "tie order {tie_order:?} is not a permutation of the tied candidates {tied:?}"
        )));
    }
    let pos = tie_order
        .iter()
        .position(|&i| i == sc.true_index())
        .expect("true index is always tied with itself");
    Ok(optimistic_rank(sc) + pos as u64)
}

/// All deterministic variants plus the effective candidate count, in one scan.
pub fn rank_record(sc: &ScoredCandidates<'_>) -> RankRecord {
    let (gt, ge, n) = sc.counts();
    RankRecord {
        optimistic: gt + 1,
        pessimistic: ge,
        candidate_count: n,
    }
}

/// Convenience wrapper: validate and rank in one call.
pub fn rank_scores(scores: &[f64], true_index: usize, mask: Option<&[bool]>) -> Result<RankRecord> {
    let sc = match mask {
        Some(m) => ScoredCandidates::with_mask(scores, true_index, m)?,
        None => ScoredCandidates::new(scores, true_index)?,
    };
    Ok(rank_record(&sc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(scores: &[f64], t: usize) -> RankRecord {
        rank_scores(scores, t, None).unwrap()
    }

    /// Every ordering of the tied block, enumerated explicitly.
    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let head = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, head);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn mixed_ties() {
        let s = [0.5, 0.9, 0.5, 0.1];
        let sc = ScoredCandidates::new(&s, 0).unwrap();
        assert_eq!(optimistic_rank(&sc), 2);
        assert_eq!(pessimistic_rank(&sc), 3);
        assert_eq!(realistic_rank(&sc), 2.5);
        assert_eq!(
            rank_record(&sc),
            RankRecord {
                optimistic: 2,
                pessimistic: 3,
                candidate_count: 4
            }
        );
    }

    #[test]
    fn mixed_ties_match_enumeration() {
        let s = [0.5, 0.9, 0.5, 0.1];
        let sc = ScoredCandidates::new(&s, 0).unwrap();
        let ranks: Vec<u64> = permutations(&sc.tied_indices())
            .iter()
            .map(|p| nondeterministic_rank(&sc, p).unwrap())
            .collect();
        assert_eq!(*ranks.iter().min().unwrap(), 2);
        assert_eq!(*ranks.iter().max().unwrap(), 3);
    }

    #[test]
    fn strict_maximum_and_minimum() {
        let r = rec(&[3.0, 2.0, 1.0], 0);
        assert_eq!((r.optimistic, r.pessimistic, r.realistic()), (1, 1, 1.0));
        let r = rec(&[3.0, 2.0, 1.0], 2);
        assert_eq!((r.optimistic, r.pessimistic, r.realistic()), (3, 3, 3.0));
    }

    #[test]
    fn all_tied() {
        let r = rec(&[0.25; 5], 2);
        assert_eq!(r.optimistic, 1);
        assert_eq!(r.pessimistic, 5);
        assert_eq!(r.realistic(), 3.0);
    }

    #[test]
    fn masked_recount() {
        let s = [0.5, 0.9, 0.5, 0.1];
        let m = [false, true, false, false];
        let r = rank_scores(&s, 0, Some(&m)).unwrap();
        assert_eq!(
            r,
            RankRecord {
                optimistic: 1,
                pessimistic: 2,
                candidate_count: 3
            }
        );
        assert_eq!(r.realistic(), 1.5);
    }

    #[test]
    fn singleton() {
        let r = rec(&[7.0], 0);
        assert_eq!(
            r,
            RankRecord {
                optimistic: 1,
                pessimistic: 1,
                candidate_count: 1
            }
        );
    }

    #[test]
    fn nondeterministic_extremes() {
        let s = [0.5, 0.9, 0.5];
        let sc = ScoredCandidates::new(&s, 0).unwrap();
        assert_eq!(nondeterministic_rank(&sc, &[0, 2]).unwrap(), 2);
        assert_eq!(nondeterministic_rank(&sc, &[2, 0]).unwrap(), 3);

        let s = [3.0, 2.0, 1.0];
        let sc = ScoredCandidates::new(&s, 0).unwrap();
        assert_eq!(nondeterministic_rank(&sc, &[0]).unwrap(), 1);
    }

    #[test]
    fn bad_tie_order() {
        let s = [0.5, 0.9, 0.5];
        let sc = ScoredCandidates::new(&s, 0).unwrap();
        assert!(nondeterministic_rank(&sc, &[0]).is_err());
        assert!(nondeterministic_rank(&sc, &[0, 1]).is_err());
        assert!(nondeterministic_rank(&sc, &[0, 2, 2]).is_err());
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(ScoredCandidates::new(&[], 0).is_err());
        assert!(ScoredCandidates::new(&[1.0, f64::NAN], 0).is_err());
        assert!(ScoredCandidates::new(&[1.0, f64::INFINITY], 0).is_err());
        assert!(ScoredCandidates::new(&[1.0, 2.0], 2).is_err());
        assert!(ScoredCandidates::with_mask(&[1.0, 2.0], 0, &[true, false]).is_err());
        assert!(ScoredCandidates::with_mask(&[1.0, 2.0], 0, &[false]).is_err());
        assert!(RankRecord::new(2, 1, 3).is_err());
        assert!(RankRecord::new(0, 1, 3).is_err());
        assert!(RankRecord::new(1, 4, 3).is_err());
    }

    #[test]
    fn variant_parsing() {
        for v in RankVariant::ALL {
            assert_eq!(v.as_str().parse::<RankVariant>().unwrap(), v);
        }
        assert!("random".parse::<RankVariant>().is_err());
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, usize, Vec<bool>)> {
        // few distinct values so ties are common
        (1usize..12).prop_flat_map(|n| {
            (
                prop::collection::vec((0u8..4).prop_map(|v| v as f64 * 0.5), n),
                0..n,
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn ordering_and_exact_midpoint((scores, t, _m) in instance()) {
            let r = rec(&scores, t);
            prop_assert!(1 <= r.optimistic);
            prop_assert!(r.optimistic as f64 <= r.realistic());
            prop_assert!(r.realistic() <= r.pessimistic as f64);
            prop_assert!(r.pessimistic <= r.candidate_count);
            prop_assert_eq!(r.realistic_x2(), r.optimistic + r.pessimistic);
        }

        #[test]
        fn no_ties_means_all_variants_agree(mut scores in prop::collection::vec(-1e6f64..1e6, 1..20), t in 0usize..20) {
            scores.sort_by(f64::total_cmp);
            scores.dedup();
            let t = t % scores.len();
            let sc = ScoredCandidates::new(&scores, t).unwrap();
            let r = rank_record(&sc);
            prop_assert_eq!(r.optimistic, r.pessimistic);
            prop_assert_eq!(nondeterministic_rank(&sc, &[t]).unwrap(), r.optimistic);
        }

        #[test]
        fn permutation_invariance((scores, t, _m) in instance(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
            let new_t = order.iter().position(|&i| i == t).unwrap();
            prop_assert_eq!(rec(&scores, t), rec(&shuffled, new_t));
        }

        #[test]
        fn masking_never_increases_rank((scores, t, mut mask) in instance()) {
            mask[t] = false;
            let full = rec(&scores, t);
            let filtered = rank_scores(&scores, t, Some(&mask)).unwrap();
            prop_assert!(filtered.optimistic <= full.optimistic);
            prop_assert!(filtered.pessimistic <= full.pessimistic);
            prop_assert!(filtered.realistic_x2() <= full.realistic_x2());
        }
    }
}
