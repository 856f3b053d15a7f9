use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compose::compose_avg;
use crate::data::{Label, LabeledPair, Linkage, Table};
use crate::embeddings::WordVectors;
use crate::error::{Error, Result};
use crate::similarity::cosine;

/// Both tables with whole-tuple averaged DRs, for cosine lookups by id.
pub struct PairUniverse<'a> {
    left: &'a Table,
    right: &'a Table,
    linkage: Linkage,
    left_drs: Vec<Vec<f64>>,
    right_drs: Vec<Vec<f64>>,
}

impl<'a> PairUniverse<'a> {
    /// `right == None` means deduplication within `left`.
    pub fn new<V: WordVectors>(left: &'a Table, right: Option<&'a Table>, vectors: &V) -> Self {
        let drs = |t: &Table| -> Vec<Vec<f64>> { t.records().iter().map(|r| compose_avg(r, vectors).vector).collect() };
        let left_drs = drs(left);
        let (right, linkage, right_drs) = match right {
            Some(r) => (r, Linkage::Link, drs(r)),
            None => (left, Linkage::Dedup, left_drs.clone()),
        };
        Self {
            left,
            right,
            linkage,
            left_drs,
            right_drs,
        }
    }

    pub fn linkage(&self) -> Linkage {
        self.linkage
    }

    pub fn left(&self) -> &'a Table {
        self.left
    }

    pub fn right(&self) -> &'a Table {
        self.right
    }

    /// Cosine of the full concatenated DRs.
    pub fn cosine(&self, left_id: &str, right_id: &str) -> Result<f64> {
        let l = self
            .left
            .position(left_id)
            .ok_or_else(|| Error::Integrity(format!("unknown left id {left_id:?}")))?;
        let r = self
            .right
            .position(right_id)
            .ok_or_else(|| Error::Integrity(format!("unknown right id {right_id:?}")))?;
        Ok(cosine(&self.left_drs[l], &self.right_drs[r]))
    }
}

/// Minimum whole-tuple cosine over the positive pairs.
pub fn positive_threshold(universe: &PairUniverse<'_>, positives: &[LabeledPair]) -> Result<f64> {
    if positives.is_empty() {
        return Err(Error::Precondition("threshold needs at least one positive pair".into()));
    }
    positives
        .iter()
        .map(|p| universe.cosine(&p.left_id, &p.right_id))
        .try_fold(f64::INFINITY, |m, s| s.map(|s| m.min(s)))
}

/// Nearest-rank percentile (`q` in 0..=100) of `values`.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil() as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeSample {
    #[serde(skip)]
    pub pairs: Vec<LabeledPair>,
    pub threshold: f64,
    /// Set when the cap was hit and the threshold was raised to the 5th
    /// percentile of positive similarities.
    pub relaxed_threshold: Option<f64>,
    pub attempts: usize,
}

const ATTEMPTS_PER_NEGATIVE: usize = 100;
const RELAX_PERCENTILE: f64 = 5.0;

/// Draws `ratio·|positives|` distinct non-matching pairs whose whole-tuple
/// cosine is below `threshold`. Each draw keeps one tuple of a random
/// positive and pairs it with a random tuple from the other side.
pub fn sample_negatives(
    universe: &PairUniverse<'_>,
    positives: &[LabeledPair],
    ratio: usize,
    threshold: f64,
    seed: u64,
) -> Result<NegativeSample> {
    let wanted = ratio * positives.len();
    let mut out = NegativeSample {
        pairs: Vec::with_capacity(wanted),
        threshold,
        relaxed_threshold: None,
        attempts: 0,
    };
    if wanted == 0 {
        return Ok(out);
    }
    let linkage = universe.linkage;
    let pos_keys: HashSet<(String, String)> =
        positives.iter().map(|p| linkage.key(&p.left_id, &p.right_id)).collect();
    let mut taken: HashSet<(String, String)> = HashSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nl, nr) = (universe.left.len(), universe.right.len());

    let mut limit = threshold;
    for phase in 0..2 {
        let cap = ATTEMPTS_PER_NEGATIVE * wanted;
        let mut attempts = 0;
        while out.pairs.len() < wanted && attempts < cap {
            attempts += 1;
            let p = &positives[rng.random_range(0..positives.len())];
            let keep_left = rng.random_bool(0.5);
            let (l, r) = match (linkage, keep_left) {
                (Linkage::Link, true) => {
                    let r = &universe.right.records()[rng.random_range(0..nr)].id;
                    (p.left_id.as_str(), r.as_str())
                }
                (Linkage::Link, false) => {
                    let l = &universe.left.records()[rng.random_range(0..nl)].id;
                    (l.as_str(), p.right_id.as_str())
                }
                (Linkage::Dedup, keep) => {
                    let anchor = if keep { &p.left_id } else { &p.right_id };
                    let other = &universe.left.records()[rng.random_range(0..nl)].id;
                    if other == anchor {
                        continue;
                    }
                    (anchor.as_str(), other.as_str())
                }
            };
            let key = linkage.key(l, r);
            if pos_keys.contains(&key) || taken.contains(&key) {
                continue;
            }
            if universe.cosine(l, r)? >= limit {
                continue;
            }
            out.pairs.push(LabeledPair::new(&key.0, &key.1, Label::NonMatch));
            taken.insert(key);
        }
        out.attempts += attempts;
        if out.pairs.len() == wanted {
            return Ok(out);
        }
        if phase == 0 {
            let sims = positives
                .iter()
                .map(|p| universe.cosine(&p.left_id, &p.right_id))
                .collect::<Result<Vec<f64>>>()?;
            let relaxed = percentile(&sims, RELAX_PERCENTILE).unwrap_or(limit).max(limit);
            out.relaxed_threshold = Some(relaxed);
            limit = relaxed;
        }
    }
    Err(Error::Precondition(format!(
        "found only {} of {wanted} negative pairs below the similarity threshold",
        out.pairs.len()
    )))
}

/// Flips exactly `⌊fraction·n⌋` labels chosen uniformly at random.
pub fn inject_noise(pairs: &[LabeledPair], fraction: f64, seed: u64) -> Result<Vec<LabeledPair>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Contract(format!("noise fraction {fraction} outside [0, 1]")));
    }
    let flips = (fraction * pairs.len() as f64).floor() as usize;
    let mut out = pairs.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in index::sample(&mut rng, pairs.len(), flips) {
        out[i].label = out[i].label.flipped();
    }
    Ok(out)
}
