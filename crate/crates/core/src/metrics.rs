//! Aggregation of per-instance ranks into Hits@k, MR, MRR and the
//! chance-adjusted AMR / AMRI.
//!
//! Ranks are held as integers in quarter units. A single-instance realistic
//! rank is a half-integer and a two-sided average of realistic ranks is a
//! quarter-integer, so every rank-sum below is an exact integer sum and the
//! result does not depend on the order in which records were produced.
//! MRR is the one floating-point reduction; it is summed in record order
//! with Neumaier compensation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rank::{RankRecord, RankVariant};

const Q: u64 = 4;

/// Which prediction side an instance belongs to.
///
/// For link prediction `Left` is head prediction and `Right` is tail
/// prediction; for entity alignment `Right` is a left→right query and
/// `Left` a right→left query. `Both` tags a per-triple side average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Both,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Both => "both",
        }
    }
}

/// One aggregation instance: either a single [`RankRecord`] or the
/// average of two (the per-triple averaged link prediction mode).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankEntry {
    optimistic_q: u64,
    pessimistic_q: u64,
    count_q: u64,
}

impl RankEntry {
    pub fn single(r: RankRecord) -> Self {
        Self {
            optimistic_q: r.optimistic * Q,
            pessimistic_q: r.pessimistic * Q,
            count_q: r.candidate_count * Q,
        }
    }

    /// Mean of two records; the candidate count is averaged as well.
    pub fn averaged(a: RankRecord, b: RankRecord) -> Self {
        let h = Q / 2;
        Self {
            optimistic_q: (a.optimistic + b.optimistic) * h,
            pessimistic_q: (a.pessimistic + b.pessimistic) * h,
            count_q: (a.candidate_count + b.candidate_count) * h,
        }
    }

    fn rank_q(&self, variant: RankVariant) -> u64 {
        match variant {
            RankVariant::Optimistic => self.optimistic_q,
            RankVariant::Pessimistic => self.pessimistic_q,
            // both operands are even, so this is exact
            RankVariant::Realistic => (self.optimistic_q + self.pessimistic_q) / 2,
        }
    }

    pub fn rank(&self, variant: RankVariant) -> f64 {
        self.rank_q(variant) as f64 / Q as f64
    }

    pub fn candidate_count(&self) -> f64 {
        self.count_q as f64 / Q as f64
    }
}

impl From<RankRecord> for RankEntry {
    fn from(r: RankRecord) -> Self {
        RankEntry::single(r)
    }
}

/// Ordered collection of ranks, optionally tagged by side.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RankCollection {
    entries: Vec<RankEntry>,
    sides: Vec<Option<Side>>,
}

impl RankCollection {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = RankRecord>) -> Self {
        let mut rc = Self::new();
        for r in records {
            rc.push(r.into(), None);
        }
        rc
    }

    pub fn push(&mut self, entry: RankEntry, side: Option<Side>) {
        self.entries.push(entry);
        self.sides.push(side);
    }

    pub fn extend(&mut self, other: RankCollection) {
        self.entries.extend(other.entries);
        self.sides.extend(other.sides);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[RankEntry] {
        &self.entries
    }

    pub fn side(&self, i: usize) -> Option<Side> {
        self.sides[i]
    }

    pub fn ranks(&self, variant: RankVariant) -> Vec<f64> {
        self.entries.iter().map(|e| e.rank(variant)).collect()
    }

    pub fn candidate_counts(&self) -> Vec<f64> {
        self.entries.iter().map(RankEntry::candidate_count).collect()
    }

    /// Sub-collection of all entries carrying `side`.
    pub fn select_side(&self, side: Side) -> RankCollection {
        let mut rc = RankCollection::new();
        for (e, s) in self.entries.iter().zip(&self.sides) {
            if *s == Some(side) {
                rc.push(*e, *s);
            }
        }
        rc
    }

    pub fn labelled_sides(&self) -> Vec<Side> {
        let mut v: Vec<Side> = self.sides.iter().flatten().copied().collect();
        v.sort();
        v.dedup();
        v
    }

    fn non_empty(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::invalid("cannot aggregate an empty rank collection"));
        }
        Ok(())
    }

    fn n(&self) -> u128 {
        self.entries.len() as u128
    }

    fn rank_sum_q(&self, variant: RankVariant) -> u128 {
        self.entries.iter().map(|e| e.rank_q(variant) as u128).sum()
    }

    fn count_sum_q(&self) -> u128 {
        self.entries.iter().map(|e| e.count_q as u128).sum()
    }
}

impl FromIterator<RankRecord> for RankCollection {
    fn from_iter<T: IntoIterator<Item = RankRecord>>(iter: T) -> Self {
        RankCollection::from_records(iter)
    }
}

/// Compensated summation in iteration order.
fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn ratio(num: u128, den: u128) -> f64 {
    num as f64 / den as f64
}

/// Fraction of instances whose rank is at most `k`.
///
/// Half-integer ranks compare numerically: 2.5 is not a hit at `k = 2`.
pub fn hits_at_k(rc: &RankCollection, k: u64, variant: RankVariant) -> Result<f64> {
    rc.non_empty()?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let limit = k * Q;
    let hits = rc
        .entries
        .iter()
        .filter(|e| e.rank_q(variant) <= limit)
        .count();
    Ok(hits as f64 / rc.len() as f64)
}

pub fn mean_rank(rc: &RankCollection, variant: RankVariant) -> Result<f64> {
    rc.non_empty()?;
    Ok(ratio(rc.rank_sum_q(variant), rc.n() * Q as u128))
}

/// Mean reciprocal rank. Reported for compatibility only.
pub fn mean_reciprocal_rank(rc: &RankCollection, variant: RankVariant) -> Result<f64> {
    rc.non_empty()?;
    let sum = neumaier_sum(rc.entries.iter().map(|e| Q as f64 / e.rank_q(variant) as f64));
    Ok(sum / rc.len() as f64)
}

/// Mean rank of a scorer that orders candidates uniformly at random:
/// `(1/2n) Σ (C_i + 1)`.
pub fn expected_mean_rank(candidate_counts: &[u64]) -> Result<f64> {
    if candidate_counts.is_empty() {
        return Err(Error::invalid("no candidate counts"));
    }
    if candidate_counts.contains(&0) {
        return Err(Error::invalid("candidate counts must be positive"));
    }
    let sum: u128 = candidate_counts.iter().map(|&c| c as u128 + 1).sum();
    Ok(ratio(sum, 2 * candidate_counts.len() as u128))
}

fn expected_mean_rank_of(rc: &RankCollection) -> f64 {
    // (1/2n) Σ (C + 1) with C in quarter units
    ratio(rc.count_sum_q() + Q as u128 * rc.n(), 2 * Q as u128 * rc.n())
}

/// Mean realistic rank divided by its expectation under random scoring.
pub fn adjusted_mean_rank(rc: &RankCollection) -> Result<f64> {
    rc.non_empty()?;
    let num = 2 * rc.rank_sum_q(RankVariant::Realistic);
    let den = rc.count_sum_q() + Q as u128 * rc.n();
    Ok(ratio(num, den))
}

/// Adjusted mean rank index, `1 - (MR - 1) / E[MR - 1]`, on realistic ranks.
///
/// 1 means every rank is 1, 0 is chance level and -1 means every rank is
/// the worst possible. Instances with a single candidate add zero to both
/// sums; a collection made only of them has no defined value.
pub fn adjusted_mean_rank_index(rc: &RankCollection) -> Result<f64> {
    rc.non_empty()?;
    let n = rc.n();
    let excess = rc.rank_sum_q(RankVariant::Realistic) - Q as u128 * n;
    let expected_excess = rc.count_sum_q() - Q as u128 * n;
    if expected_excess == 0 {
        return Err(Error::Degenerate(
            "AMRI is undefined when every candidate set has size 1".into(),
        ));
    }
    // 1 - Σ(r - 1) / (Σ(C - 1) / 2)
    Ok(1.0 - ratio(2 * excess, expected_excess))
}

/// Standard deviation of AMRI for a scorer whose ranks are uniform on
/// `1..=C_i`, given the per-instance candidate counts.
pub fn chance_amri_std(candidate_counts: &[u64]) -> Result<f64> {
    let var_sum: f64 = candidate_counts
        .iter()
        .map(|&c| (c as f64 * c as f64 - 1.0) / 12.0)
        .sum();
    let half_excess: f64 = candidate_counts.iter().map(|&c| (c as f64 - 1.0) / 2.0).sum();
    if half_excess == 0.0 {
        return Err(Error::Degenerate(
            "AMRI is undefined when every candidate set has size 1".into(),
        ));
    }
    Ok(var_sum.sqrt() / half_excess)
}

/// Mean ranks under every deterministic variant, for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantMeans {
    pub optimistic: f64,
    pub pessimistic: f64,
    pub realistic: f64,
}

/// All metrics computed from one [`RankCollection`].
///
/// `mean_rank`, `mrr` and `hits_at_k` use `variant`; `amr` and `amri`
/// always use realistic ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub variant: RankVariant,
    pub n_instances: u64,
    pub hits_at_k: BTreeMap<u64, f64>,
    pub mean_rank: f64,
    pub mrr: f64,
    pub expected_mean_rank: f64,
    pub amr: f64,
    pub amri: f64,
    pub mean_rank_by_variant: VariantMeans,
    /// Metrics included for compatibility that should not drive model comparison.
    pub informational: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sides: BTreeMap<Side, MetricReport>,
}

pub fn summarize(rc: &RankCollection, ks: &[u64], variant: RankVariant) -> Result<MetricReport> {
    let mut report = summarize_flat(rc, ks, variant)?;
    for side in rc.labelled_sides() {
        report
            .sides
            .insert(side, summarize_flat(&rc.select_side(side), ks, variant)?);
    }
    Ok(report)
}

fn summarize_flat(rc: &RankCollection, ks: &[u64], variant: RankVariant) -> Result<MetricReport> {
    rc.non_empty()?;
    let mut hits = BTreeMap::new();
    for &k in ks {
        hits.insert(k, hits_at_k(rc, k, variant)?);
    }
    Ok(MetricReport {
        variant,
        n_instances: rc.len() as u64,
        hits_at_k: hits,
        mean_rank: mean_rank(rc, variant)?,
        mrr: mean_reciprocal_rank(rc, variant)?,
        expected_mean_rank: expected_mean_rank_of(rc),
        amr: adjusted_mean_rank(rc)?,
        amri: adjusted_mean_rank_index(rc)?,
        mean_rank_by_variant: VariantMeans {
            optimistic: mean_rank(rc, RankVariant::Optimistic)?,
            pessimistic: mean_rank(rc, RankVariant::Pessimistic)?,
            realistic: mean_rank(rc, RankVariant::Realistic)?,
        },
        informational: vec!["mrr".to_string()],
        sides: BTreeMap::new(),
    })
}

/// Formats `x` with six significant digits, shortest form.
pub fn six_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("valid float literal");
    format!("{rounded}")
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn csv_header(ks: &[u64]) -> String {
        let mut h = String::from(
            "side,variant,n_instances,mean_rank,mrr,expected_mean_rank,amr,amri",
        );
        for k in ks {
            let _ = write!(h, ",hits_at_{k}");
        }
        h
    }

    fn csv_row(&self, side: &str, ks: &[u64]) -> String {
        let mut row = format!(
            "{side},{},{},{},{},{},{},{}",
            self.variant,
            self.n_instances,
            six_sig(self.mean_rank),
            six_sig(self.mrr),
            six_sig(self.expected_mean_rank),
            six_sig(self.amr),
            six_sig(self.amri),
        );
        for k in ks {
            match self.hits_at_k.get(k) {
                Some(v) => {
                    let _ = write!(row, ",{}", six_sig(*v));
                }
                None => row.push(','),
            }
        }
        row
    }

    /// Flat CSV: header, an `all` row, then one row per labelled side.
    pub fn to_csv(&self) -> String {
        let ks: Vec<u64> = self.hits_at_k.keys().copied().collect();
        let mut out = Self::csv_header(&ks);
        out.push('\n');
        out.push_str(&self.csv_row("all", &ks));
        out.push('\n');
        for (side, sub) in &self.sides {
            out.push_str(&sub.csv_row(side.as_str(), &ks));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(o: u64, p: u64, c: u64) -> RankRecord {
        RankRecord::new(o, p, c).unwrap()
    }

    /// Collection with exact (tie-free) integer ranks.
    fn exact(ranks: &[u64], counts: &[u64]) -> RankCollection {
        ranks
            .iter()
            .zip(counts)
            .map(|(&r, &c)| rec(r, r, c))
            .collect()
    }

    const R: RankVariant = RankVariant::Realistic;

    #[test]
    fn hits() {
        let rc = exact(&[1, 3, 5], &[10, 10, 10]);
        assert_eq!(hits_at_k(&rc, 3, R).unwrap(), 2.0 / 3.0);
        assert_eq!(hits_at_k(&rc, 5, R).unwrap(), 1.0);
        assert!(hits_at_k(&rc, 0, R).is_err());
    }

    #[test]
    fn half_integer_hit_boundary() {
        let rc: RankCollection = [rec(2, 3, 4)].into_iter().collect();
        assert_eq!(hits_at_k(&rc, 2, R).unwrap(), 0.0);
        assert_eq!(hits_at_k(&rc, 3, R).unwrap(), 1.0);
    }

    #[test]
    fn mean_rank_examples() {
        assert_eq!(mean_rank(&exact(&[1, 3, 5], &[5, 5, 5]), R).unwrap(), 3.0);
        assert_eq!(mean_rank(&exact(&[1, 1, 1], &[5, 5, 5]), R).unwrap(), 1.0);
        let rc: RankCollection = [rec(2, 3, 5), rec(3, 4, 5)].into_iter().collect();
        assert_eq!(mean_rank(&rc, R).unwrap(), 3.0);
    }

    #[test]
    fn mrr_examples() {
        let v = mean_reciprocal_rank(&exact(&[1, 3, 5], &[5, 5, 5]), R).unwrap();
        assert!((v - (1.0 + 1.0 / 3.0 + 0.2) / 3.0).abs() < 1e-15);
        assert!((v - 0.5111).abs() < 1e-4);
        assert_eq!(mean_reciprocal_rank(&exact(&[1, 1], &[2, 2]), R).unwrap(), 1.0);
        assert_eq!(mean_reciprocal_rank(&exact(&[2], &[2]), R).unwrap(), 0.5);
    }

    #[test]
    fn expected_mean_rank_examples() {
        assert_eq!(expected_mean_rank(&[9, 19]).unwrap(), 7.5);
        assert_eq!(expected_mean_rank(&[1]).unwrap(), 1.0);
        assert_eq!(expected_mean_rank(&[5, 5]).unwrap(), 3.0);
        assert!(expected_mean_rank(&[]).is_err());
    }

    #[test]
    fn amr_examples() {
        assert_eq!(adjusted_mean_rank(&exact(&[1, 1], &[5, 5])).unwrap(), 1.0 / 3.0);
        assert_eq!(adjusted_mean_rank(&exact(&[2, 3], &[5, 5])).unwrap(), 2.5 / 3.0);
        let chance: RankCollection = [rec(1, 5, 5), rec(1, 9, 9)].into_iter().collect();
        assert_eq!(adjusted_mean_rank(&chance).unwrap(), 1.0);
    }

    #[test]
    fn amri_examples() {
        assert_eq!(adjusted_mean_rank_index(&exact(&[1, 1, 1], &[3, 7, 2])).unwrap(), 1.0);
        assert_eq!(adjusted_mean_rank_index(&exact(&[2, 3], &[5, 5])).unwrap(), 0.25);
        assert_eq!(adjusted_mean_rank_index(&exact(&[3, 7, 2], &[3, 7, 2])).unwrap(), -1.0);
        let constant: RankCollection = [rec(1, 5, 5), rec(1, 2, 2), rec(1, 100, 100)]
            .into_iter()
            .collect();
        assert_eq!(adjusted_mean_rank_index(&constant).unwrap(), 0.0);
    }

    #[test]
    fn amri_degenerate() {
        let rc = exact(&[1, 1], &[1, 1]);
        assert!(matches!(
            adjusted_mean_rank_index(&rc),
            Err(Error::Degenerate(_))
        ));
        // mixed: singletons contribute nothing
        let rc = exact(&[1, 1, 2], &[1, 1, 3]);
        assert_eq!(adjusted_mean_rank_index(&rc).unwrap(), 0.0);
    }

    #[test]
    fn empty_collection_errors() {
        let rc = RankCollection::new();
        assert!(hits_at_k(&rc, 1, R).is_err());
        assert!(mean_rank(&rc, R).is_err());
        assert!(mean_reciprocal_rank(&rc, R).is_err());
        assert!(adjusted_mean_rank(&rc).is_err());
        assert!(adjusted_mean_rank_index(&rc).is_err());
        assert!(summarize(&rc, &[1], R).is_err());
    }

    #[test]
    fn summary_example() {
        let rc = exact(&[1, 3, 5], &[10, 10, 10]);
        let rep = summarize(&rc, &[1, 10], R).unwrap();
        assert_eq!(rep.hits_at_k[&1], 1.0 / 3.0);
        assert_eq!(rep.hits_at_k[&10], 1.0);
        assert_eq!(rep.mean_rank, 3.0);
        assert!((rep.amri - (1.0 - 2.0 / 4.5)).abs() < 1e-15);
        assert!(rep.sides.is_empty());

        let rep = summarize(&rc, &[], R).unwrap();
        assert!(rep.hits_at_k.is_empty());

        let rep = summarize(&exact(&[1], &[2]), &[1], R).unwrap();
        assert_eq!((rep.mean_rank, rep.amri), (1.0, 1.0));
    }

    #[test]
    fn averaged_entries() {
        let e = RankEntry::averaged(rec(1, 1, 4), rec(3, 4, 5));
        assert_eq!(e.rank(RankVariant::Optimistic), 2.0);
        assert_eq!(e.rank(R), 2.25);
        assert_eq!(e.candidate_count(), 4.5);

        // constant scorer on both sides still averages to chance
        let mut rc = RankCollection::new();
        rc.push(RankEntry::averaged(rec(1, 4, 4), rec(1, 7, 7)), Some(Side::Both));
        assert_eq!(adjusted_mean_rank_index(&rc).unwrap(), 0.0);
    }

    #[test]
    fn side_breakdown() {
        let mut rc = RankCollection::new();
        rc.push(rec(1, 1, 5).into(), Some(Side::Left));
        rc.push(rec(3, 3, 5).into(), Some(Side::Right));
        let rep = summarize(&rc, &[1], R).unwrap();
        assert_eq!(rep.sides.len(), 2);
        assert_eq!(rep.sides[&Side::Left].mean_rank, 1.0);
        assert_eq!(rep.sides[&Side::Right].mean_rank, 3.0);
        assert_eq!(rep.mean_rank, 2.0);
    }

    #[test]
    fn json_round_trip_and_csv() {
        let mut rc = RankCollection::new();
        rc.push(rec(1, 2, 7).into(), Some(Side::Left));
        rc.push(rec(3, 3, 11).into(), Some(Side::Right));
        let rep = summarize(&rc, &[1, 3], R).unwrap();
        let back = MetricReport::from_json(&rep.to_json()).unwrap();
        assert_eq!(back, rep);

        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "side,variant,n_instances,mean_rank,mrr,expected_mean_rank,amr,amri,hits_at_1,hits_at_3"
        );
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("all,realistic,2,2.25,"));
        assert!(lines[2].starts_with("left,"));
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(six_sig(0.5555555555), "0.555556");
        assert_eq!(six_sig(3.0), "3");
        assert_eq!(six_sig(123456789.0), "123457000");
        assert_eq!(six_sig(-0.25), "-0.25");
    }

    proptest! {
        #[test]
        fn bounds_and_monotonicity(
            raw in prop::collection::vec((1u64..50, 0u64..50, 0u64..50), 1..200)
        ) {
            let rc: RankCollection = raw
                .iter()
                .map(|&(c, a, b)| {
                    let (lo, hi) = (a % c + 1, b % c + 1);
                    rec(lo.min(hi), lo.max(hi), c)
                })
                .collect();
            let max_c = raw.iter().map(|r| r.0).max().unwrap();
            for v in RankVariant::ALL {
                let mut prev = 0.0;
                for k in 1..=max_c {
                    let h = hits_at_k(&rc, k, v).unwrap();
                    prop_assert!(h >= prev);
                    prev = h;
                }
                prop_assert_eq!(prev, 1.0);
                let mr = mean_rank(&rc, v).unwrap();
                prop_assert!((1.0..=max_c as f64).contains(&mr));
                let mrr = mean_reciprocal_rank(&rc, v).unwrap();
                prop_assert!(mrr > 0.0 && mrr <= 1.0 + 1e-15);
            }
            if let Ok(amri) = adjusted_mean_rank_index(&rc) {
                prop_assert!((-1.0..=1.0).contains(&amri));
                let all_one = rc.entries().iter().all(|e| e.rank(R) == 1.0);
                prop_assert_eq!(amri == 1.0, all_one);
            }
        }

        #[test]
        fn constant_scorer_is_exactly_chance(counts in prop::collection::vec(1u64..10_000, 1..300)) {
            prop_assume!(counts.iter().any(|&c| c > 1));
            let rc: RankCollection = counts.iter().map(|&c| rec(1, c, c)).collect();
            prop_assert_eq!(adjusted_mean_rank_index(&rc).unwrap(), 0.0);
            prop_assert_eq!(adjusted_mean_rank(&rc).unwrap(), 1.0);
        }
    }
}
