//! Blocking and matching quality metrics.
//!
//! The reduction ratio here follows the "compared / possible" convention:
//! smaller means fewer comparisons. The classic definition is one minus this
//! value. Serialized reports name the field `comparison_ratio` and accept
//! `reduction_ratio` as an alias.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{Label, Linkage};
use crate::error::{Error, Result};

/// A set of id pairs, canonicalized according to the linkage mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    linkage: Linkage,
    pairs: BTreeSet<(String, String)>,
}

impl PairSet {
    pub fn new(linkage: Linkage) -> Self {
        Self {
            linkage,
            pairs: BTreeSet::new(),
        }
    }

    pub fn from_pairs<'a, I>(linkage: Linkage, pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut s = Self::new(linkage);
        for (l, r) in pairs {
            s.insert(l, r);
        }
        s
    }

    pub fn linkage(&self) -> Linkage {
        self.linkage
    }

    pub fn insert(&mut self, left: &str, right: &str) -> bool {
        self.pairs.insert(self.linkage.key(left, right))
    }

    pub fn contains(&self, left: &str, right: &str) -> bool {
        self.pairs.contains(&self.linkage.key(left, right))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn intersection_len(&self, other: &PairSet) -> usize {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.iter().filter(|(a, b)| large.contains(a, b)).count()
    }
}

/// Returns `(pc, covered, total)`.
pub fn pair_completeness(candidates: &PairSet, truth: &PairSet) -> Result<(f64, usize, usize)> {
    if truth.is_empty() {
        return Err(Error::Precondition("pair completeness needs at least one true pair".into()));
    }
    let covered = truth.intersection_len(candidates);
    Ok((covered as f64 / truth.len() as f64, covered, truth.len()))
}

/// Number of distinct pairs: `n_left·n_right` across two tables, `C(n, 2)`
/// within one.
pub fn total_pairs(n_left: usize, n_right: Option<usize>) -> u64 {
    match n_right {
        Some(r) => n_left as u64 * r as u64,
        None => (n_left as u64) * (n_left as u64).saturating_sub(1) / 2,
    }
}

pub fn reduction_ratio(n_candidates: usize, n_left: usize, n_right: Option<usize>) -> Result<f64> {
    if n_left == 0 || n_right == Some(0) {
        return Err(Error::Precondition("table sizes must be at least 1".into()));
    }
    let total = total_pairs(n_left, n_right);
    if total == 0 {
        return Ok(0.0);
    }
    Ok(n_candidates as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockingReport {
    pub pair_completeness: f64,
    #[serde(rename = "comparison_ratio", alias = "reduction_ratio")]
    pub reduction_ratio: f64,
    pub compared_pairs: u64,
    pub total_pairs: u64,
    pub covered_duplicates: usize,
    pub total_duplicates: usize,
    /// Per table: bucket size → number of buckets of that size.
    pub occupancy: Vec<BTreeMap<usize, usize>>,
}

impl BlockingReport {
    pub fn compute(
        candidates: &PairSet,
        truth: &PairSet,
        n_left: usize,
        n_right: Option<usize>,
        occupancy: Vec<BTreeMap<usize, usize>>,
    ) -> Result<Self> {
        let (pc, covered, total_dup) = pair_completeness(candidates, truth)?;
        Ok(Self {
            pair_completeness: pc,
            reduction_ratio: reduction_ratio(candidates.len(), n_left, n_right)?,
            compared_pairs: candidates.len() as u64,
            total_pairs: total_pairs(n_left, n_right),
            covered_duplicates: covered,
            total_duplicates: total_dup,
            occupancy,
        })
    }

    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "blocking.pair_completeness={}\nblocking.comparison_ratio={}\nblocking.compared_pairs={}\nblocking.total_pairs={}\nblocking.covered_duplicates={}\nblocking.total_duplicates={}\n",
            self.pair_completeness,
            self.reduction_ratio,
            self.compared_pairs,
            self.total_pairs,
            self.covered_duplicates,
            self.total_duplicates
        );
        for (t, hist) in self.occupancy.iter().enumerate() {
            let buckets: usize = hist.values().sum();
            let largest = hist.keys().next_back().copied().unwrap_or(0);
            s.push_str(&format!("blocking.table{t}.buckets={buckets}\nblocking.table{t}.largest_bucket={largest}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl MatchReport {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            tn,
        }
    }

    pub fn to_kv(&self, prefix: &str) -> String {
        format!(
            "{prefix}.precision={}\n{prefix}.recall={}\n{prefix}.f1={}\n{prefix}.tp={}\n{prefix}.fp={}\n{prefix}.fn={}\n{prefix}.tn={}\n",
            self.precision, self.recall, self.f1, self.tp, self.fp, self.fn_, self.tn
        )
    }
}

/// Confusion counts of `predictions` against `truth`. True pairs that never
/// appear among the predictions count as false negatives. With `universe`
/// (the number of pairs in scope), TN covers the unevaluated pairs too.
pub fn precision_recall_f1<'a, I>(predictions: I, truth: &PairSet, universe: Option<u64>) -> MatchReport
where
    I: IntoIterator<Item = (&'a str, &'a str, Label)>,
{
    let mut seen = PairSet::new(truth.linkage());
    let (mut tp, mut fp, mut tn) = (0u64, 0u64, 0u64);
    for (l, r, label) in predictions {
        if !seen.insert(l, r) {
            continue;
        }
        match (label, truth.contains(l, r)) {
            (Label::Match, true) => tp += 1,
            (Label::Match, false) => fp += 1,
            (Label::NonMatch, false) => tn += 1,
            (Label::NonMatch, true) => {}
        }
    }
    let fn_ = truth.len() as u64 - tp;
    if let Some(u) = universe {
        tn = u.saturating_sub(tp + fp + fn_);
    }
    MatchReport::from_counts(tp, fp, fn_, tn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(linkage: Linkage, pairs: &[(&str, &str)]) -> PairSet {
        PairSet::from_pairs(linkage, pairs.iter().copied())
    }

    #[test]
    fn pc_examples() {
        let truth = set(Linkage::Link, &[("a", "x"), ("b", "y")]);
        let all = set(Linkage::Link, &[("a", "x"), ("b", "y"), ("c", "z")]);
        assert_eq!(pair_completeness(&all, &truth).unwrap().0, 1.0);
        let none = set(Linkage::Link, &[("x", "a")]);
        assert_eq!(pair_completeness(&none, &truth).unwrap().0, 0.0);
        assert!(pair_completeness(&all, &PairSet::new(Linkage::Link)).is_err());

        // dedup pairs compare unordered
        let truth = set(Linkage::Dedup, &[("a", "b")]);
        let cand = set(Linkage::Dedup, &[("b", "a")]);
        assert_eq!(pair_completeness(&cand, &truth).unwrap().0, 1.0);
    }

    #[test]
    fn pc_counting_at_benchmark_scale() {
        let truth = PairSet::from_pairs(
            Linkage::Link,
            (0..5347).map(|i| (format!("l{i}"), format!("r{i}"))).collect::<Vec<_>>().iter().map(|(a, b)| (a.as_str(), b.as_str())),
        );
        let cand_pairs: Vec<(String, String)> = (0..4812).map(|i| (format!("l{i}"), format!("r{i}"))).collect();
        let cand = PairSet::from_pairs(Linkage::Link, cand_pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())));
        let (pc, covered, total) = pair_completeness(&cand, &truth).unwrap();
        assert_eq!((covered, total), (4812, 5347));
        assert!((pc - 4812.0 / 5347.0).abs() < 1e-15);
        assert!((pc - 0.8999).abs() < 1e-4);
    }

    #[test]
    fn rr_examples() {
        assert_eq!(reduction_ratio(12, 3, Some(4)).unwrap(), 1.0);
        assert_eq!(reduction_ratio(0, 3, Some(4)).unwrap(), 0.0);
        assert_eq!(reduction_ratio(10, 5, None).unwrap(), 1.0);
        assert_eq!(reduction_ratio(5, 5, None).unwrap(), 0.5);
        assert!(reduction_ratio(1, 0, None).is_err());
    }

    #[test]
    fn prf_examples() {
        let truth = set(Linkage::Link, &[("a", "1"), ("b", "2")]);
        let perfect = [("a", "1", Label::Match), ("b", "2", Label::Match), ("c", "3", Label::NonMatch)];
        let r = precision_recall_f1(perfect, &truth, None);
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        assert_eq!(r.tn, 1);

        let negative = [("a", "1", Label::NonMatch)];
        let r = precision_recall_f1(negative, &truth, None);
        assert_eq!((r.recall, r.f1), (0.0, 0.0));
        assert_eq!(r.fn_, 2);

        let r = MatchReport::from_counts(8, 2, 2, 0);
        assert!((r.precision - 0.8).abs() < 1e-15);
        assert!((r.recall - 0.8).abs() < 1e-15);
        assert!((r.f1 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn universe_fills_true_negatives() {
        let truth = set(Linkage::Link, &[("a", "1")]);
        let r = precision_recall_f1([("a", "1", Label::Match), ("b", "1", Label::Match)], &truth, Some(100));
        assert_eq!((r.tp, r.fp, r.fn_, r.tn), (1, 1, 0, 98));
    }

    #[test]
    fn report_serializes_comparison_ratio_with_alias() {
        let rep = BlockingReport {
            pair_completeness: 0.5,
            reduction_ratio: 0.25,
            compared_pairs: 1,
            total_pairs: 4,
            covered_duplicates: 1,
            total_duplicates: 2,
            occupancy: vec![BTreeMap::from([(1, 2)])],
        };
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("\"comparison_ratio\":0.25"));
        let aliased = json.replace("comparison_ratio", "reduction_ratio");
        let back: BlockingReport = serde_json::from_str(&aliased).unwrap();
        assert_eq!(back, rep);
        assert!(rep.to_kv().contains("blocking.comparison_ratio=0.25"));
    }

    proptest! {
        #[test]
        fn pc_rr_monotone_under_growth(
            truth in proptest::collection::btree_set((0u8..10, 0u8..10), 1..20),
            base in proptest::collection::btree_set((0u8..10, 0u8..10), 0..40),
            extra in proptest::collection::btree_set((0u8..10, 0u8..10), 0..40),
        ) {
            let s = |v: &BTreeSet<(u8, u8)>| {
                let owned: Vec<(String, String)> = v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
                PairSet::from_pairs(Linkage::Link, owned.iter().map(|(a, b)| (a.as_str(), b.as_str())))
            };
            let t = s(&truth);
            let small = s(&base);
            let big = s(&base.union(&extra).copied().collect());
            prop_assert!(pair_completeness(&small, &t).unwrap().0 <= pair_completeness(&big, &t).unwrap().0);
            prop_assert!(reduction_ratio(small.len(), 10, Some(10)).unwrap() <= reduction_ratio(big.len(), 10, Some(10)).unwrap());
        }
    }
}
