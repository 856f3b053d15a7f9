//! Cosine LSH blocking with random hyperplanes.
//!
//! Each of `L` tables hashes a DR to a `K`-bit code, one bit per hyperplane
//! (`+1` when the dot product with the plane's normal is non-negative).
//! Tuples sharing a code in any table become candidate pairs. Multi-probe
//! queries also visit buckets within a small Hamming distance of the query's
//! code.

mod snapshot;
mod tune;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::cosine;

pub use snapshot::{decode_snapshot, encode_snapshot, SNAPSHOT_MAGIC};
pub use tune::{tune_params, TuningGoal};

pub const MAX_BITS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LshConfig {
    pub k: usize,
    pub l: usize,
    pub probe_radius: usize,
    /// 0 means unlimited.
    pub top_n: usize,
    pub seed: u64,
}

impl Default for LshConfig {
    fn default() -> Self {
        Self {
            k: 10,
            l: 2,
            probe_radius: 0,
            top_n: 0,
            seed: 0,
        }
    }
}

impl LshConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > MAX_BITS {
            return Err(Error::Config(format!("lsh.k must be in 1..={MAX_BITS}, got {}", self.k)));
        }
        if self.l == 0 {
            return Err(Error::Config("lsh.l must be at least 1".into()));
        }
        if self.probe_radius > self.k {
            return Err(Error::Config(format!(
                "lsh.probe_radius {} exceeds lsh.k {}",
                self.probe_radius, self.k
            )));
        }
        Ok(())
    }
}

/// `L` groups of `K` unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneFamily {
    dim: usize,
    k: usize,
    l: usize,
    /// `Some` when the normals were drawn from this seed.
    seed: Option<u64>,
    normals: Vec<f64>,
}

impl HyperplaneFamily {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// The `K·dim` normals of table `t`, row-major.
    pub fn planes(&self, t: usize) -> &[f64] {
        let n = self.k * self.dim;
        &self.normals[t * n..(t + 1) * n]
    }

    pub fn normals(&self) -> &[f64] {
        &self.normals
    }

    /// Uses the given normals (normalized to unit length). Zero normals are
    /// rejected.
    pub fn from_normals(dim: usize, k: usize, l: usize, mut normals: Vec<f64>) -> Result<Self> {
        if dim == 0 || k == 0 || k > MAX_BITS || l == 0 {
            return Err(Error::Contract("hyperplane family needs dim ≥ 1, 1 ≤ K ≤ 64, L ≥ 1".into()));
        }
        if normals.len() != dim * k * l {
            return Err(Error::Contract(format!(
                "expected {} normal components, got {}",
                dim * k * l,
                normals.len()
            )));
        }
        for row in normals.chunks_exact_mut(dim) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::Contract("hyperplane normal must be non-zero and finite".into()));
            }
            row.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(Self {
            dim,
            k,
            l,
            seed: None,
            normals,
        })
    }
}

/// Draws `L×K` normals from the standard spherical Gaussian and normalizes
/// them.
pub fn sample_hyperplanes(dim: usize, k: usize, l: usize, seed: u64) -> Result<HyperplaneFamily> {
    if dim == 0 {
        return Err(Error::Contract("hyperplane dimension must be at least 1".into()));
    }
    if k == 0 || k > MAX_BITS || l == 0 {
        return Err(Error::Contract("hyperplane family needs 1 ≤ K ≤ 64 and L ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normals = Vec::with_capacity(dim * k * l);
    for _ in 0..k * l {
        loop {
            let row: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                normals.extend(row.iter().map(|x| x / norm));
                break;
            }
        }
    }
    Ok(HyperplaneFamily {
        dim,
        k,
        l,
        seed: Some(seed),
        normals,
    })
}

/// `K` sign bits; bit `i` set means `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HashCode {
    bits: u64,
    k: u8,
}

impl HashCode {
    pub fn from_bits(bits: u64, k: usize) -> Self {
        let mask = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
        Self {
            bits: bits & mask,
            k: k as u8,
        }
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    pub fn len(self) -> usize {
        self.k as usize
    }

    pub fn is_empty(self) -> bool {
        self.k == 0
    }

    /// `+1`/`−1` per plane, in plane order.
    pub fn signs(self) -> Vec<i8> {
        (0..self.len())
            .map(|i| if self.bits >> i & 1 == 1 { 1 } else { -1 })
            .collect()
    }

    pub fn hamming(self, other: HashCode) -> u32 {
        (self.bits ^ other.bits).count_ones()
    }
}

/// Sign code of `v` against `k` row-major unit normals.
pub fn hash_code(v: &[f64], planes: &[f64], k: usize) -> Result<HashCode> {
    if k == 0 || k > MAX_BITS {
        return Err(Error::Contract(format!("hash code length must be 1..=64, got {k}")));
    }
    let dim = v.len();
    if dim == 0 || planes.len() != k * dim {
        return Err(Error::Contract(format!(
            "vector of length {dim} does not match {k} planes of {} components",
            planes.len()
        )));
    }
    let mut bits = 0u64;
    for (i, normal) in planes.chunks_exact(dim).enumerate() {
        let dot: f64 = normal.iter().zip(v).map(|(a, b)| a * b).sum();
        if dot >= 0.0 {
            bits |= 1 << i;
        }
    }
    Ok(HashCode::from_bits(bits, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub id: String,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LshIndex {
    config: LshConfig,
    family: HyperplaneFamily,
    entries: Vec<IndexEntry>,
    vectors: Vec<f64>,
    two_sided: bool,
    /// Per table: code → entry indices (ascending).
    tables: Vec<BTreeMap<u64, Vec<usize>>>,
}

/// Builds an index over one side (deduplication) or two sides (linkage).
/// All DRs must have length `dim`.
pub fn build_index(
    dim: usize,
    left: &[(String, Vec<f64>)],
    right: Option<&[(String, Vec<f64>)]>,
    cfg: &LshConfig,
) -> Result<LshIndex> {
    cfg.validate()?;
    let family = sample_hyperplanes(dim, cfg.k, cfg.l, cfg.seed)?;
    LshIndex::with_family(family, left, right, cfg)
}

impl LshIndex {
    /// Builds with an explicit family; `cfg.k`/`cfg.l` must agree with it.
    pub fn with_family(
        family: HyperplaneFamily,
        left: &[(String, Vec<f64>)],
        right: Option<&[(String, Vec<f64>)]>,
        cfg: &LshConfig,
    ) -> Result<Self> {
        if family.k != cfg.k || family.l != cfg.l {
            return Err(Error::Contract("hyperplane family does not match K/L".into()));
        }
        let mut index = Self {
            config: *cfg,
            family,
            entries: Vec::new(),
            vectors: Vec::new(),
            two_sided: right.is_some(),
            tables: vec![BTreeMap::new(); cfg.l],
        };
        let sides = std::iter::once((Side::Left, left)).chain(right.map(|r| (Side::Right, r)));
        let mut seen: HashSet<(Side, &str)> = HashSet::new();
        for (side, items) in sides {
            for (id, v) in items {
                if !seen.insert((side, id.as_str())) {
                    return Err(Error::Integrity(format!("id {id:?} indexed twice on the same side")));
                }
                index.insert(id.clone(), side, v)?;
            }
        }
        Ok(index)
    }

    fn insert(&mut self, id: String, side: Side, v: &[f64]) -> Result<()> {
        if v.len() != self.family.dim {
            return Err(Error::Integrity(format!(
                "DR for {id:?} has length {}, index dimension is {}",
                v.len(),
                self.family.dim
            )));
        }
        let e = self.entries.len();
        for t in 0..self.config.l {
            let code = hash_code(v, self.family.planes(t), self.family.k())?;
            self.tables[t].entry(code.bits()).or_default().push(e);
        }
        self.entries.push(IndexEntry { id, side });
        self.vectors.extend_from_slice(v);
        Ok(())
    }

    pub fn config(&self) -> &LshConfig {
        &self.config
    }

    pub fn family(&self) -> &HyperplaneFamily {
        &self.family
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_two_sided(&self) -> bool {
        self.two_sided
    }

    pub fn vector(&self, entry: usize) -> &[f64] {
        let d = self.family.dim;
        &self.vectors[entry * d..(entry + 1) * d]
    }

    /// Buckets of table `t` as (code, members).
    pub fn buckets(&self, t: usize) -> impl Iterator<Item = (HashCode, &[usize])> {
        let k = self.config.k;
        self.tables[t].iter().map(move |(&bits, v)| (HashCode::from_bits(bits, k), v.as_slice()))
    }

    pub fn code_of(&self, v: &[f64], t: usize) -> Result<HashCode> {
        if v.len() != self.family.dim {
            return Err(Error::Contract(format!(
                "query has length {}, index dimension is {}",
                v.len(),
                self.family.dim
            )));
        }
        hash_code(v, self.family.planes(t), self.family.k())
    }

    /// Bucket size histogram per table.
    pub fn occupancy(&self) -> Vec<BTreeMap<usize, usize>> {
        self.tables
            .iter()
            .map(|table| {
                let mut hist = BTreeMap::new();
                for members in table.values() {
                    *hist.entry(members.len()).or_insert(0) += 1;
                }
                hist
            })
            .collect()
    }

    fn pairable(&self, a: usize, b: usize) -> bool {
        a != b && (!self.two_sided || self.entries[a].side != self.entries[b].side)
    }

    /// Every distinct within-bucket pair across all tables, as entry
    /// indices `(a, b)` with `a < b`, sorted. With two sides only cross-side
    /// pairs are produced.
    pub fn block_pairs(&self) -> Vec<(usize, usize)> {
        let mut out: BTreeSet<(usize, usize)> = BTreeSet::new();
        for table in &self.tables {
            for members in table.values() {
                for (i, &a) in members.iter().enumerate() {
                    for &b in &members[i + 1..] {
                        if self.pairable(a, b) {
                            out.insert((a.min(b), a.max(b)));
                        }
                    }
                }
            }
        }
        out.into_iter().collect()
    }

    /// [`Self::block_pairs`] as `(left_id, right_id)`; in one-sided mode the
    /// ids are in entry order.
    pub fn block_pair_ids(&self) -> Vec<(&str, &str)> {
        self.block_pairs().into_iter().map(|(a, b)| self.oriented(a, b)).collect()
    }

    /// Ids of a pair with the left-side entry first.
    pub fn oriented(&self, a: usize, b: usize) -> (&str, &str) {
        let (ea, eb) = (&self.entries[a], &self.entries[b]);
        if ea.side == Side::Right && eb.side == Side::Left {
            (&eb.id, &ea.id)
        } else {
            (&ea.id, &eb.id)
        }
    }

    /// Occupants of every bucket within Hamming distance `radius` of `v`'s
    /// code, over all tables.
    pub fn candidates_multiprobe(&self, v: &[f64], radius: usize) -> Result<BTreeSet<usize>> {
        if radius > self.config.k {
            return Err(Error::Contract(format!(
                "probe radius {radius} exceeds K = {}",
                self.config.k
            )));
        }
        let mut out = BTreeSet::new();
        for t in 0..self.config.l {
            let code = self.code_of(v, t)?;
            for probe in probe_sequence(code, radius) {
                if let Some(members) = self.tables[t].get(&probe.bits()) {
                    out.extend(members.iter().copied());
                }
            }
        }
        Ok(out)
    }

    /// Multi-probe candidates of an indexed entry: itself excluded and, with
    /// two sides, only entries from the other side.
    pub fn candidates_for(&self, entry: usize, radius: usize) -> Result<BTreeSet<usize>> {
        let mut c = self.candidates_multiprobe(self.vector(entry), radius)?;
        c.retain(|&b| self.pairable(entry, b));
        Ok(c)
    }

    /// Up to `n` candidates ranked by descending cosine to `v`, ties by
    /// ascending id.
    pub fn topn_filter(&self, v: &[f64], candidates: &BTreeSet<usize>, n: usize) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(Error::Contract("top-N needs N ≥ 1".into()));
        }
        let mut scored: Vec<(f64, usize)> = candidates
            .iter()
            .map(|&c| (cosine(v, self.vector(c)), c))
            .collect();
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| self.entries[a.1].id.cmp(&self.entries[b.1].id))
        });
        scored.truncate(n);
        Ok(scored.into_iter().map(|(_, c)| c).collect())
    }

    /// Candidate pairs for matching. With `probe_radius == 0 && top_n == 0`
    /// this equals [`Self::block_pairs`]. Otherwise every query entry (left
    /// side, or all entries when one-sided) is probed and optionally cut to
    /// its top-N.
    pub fn candidate_pairs(&self) -> Result<Vec<(usize, usize)>> {
        let LshConfig { probe_radius, top_n, .. } = self.config;
        if probe_radius == 0 && top_n == 0 {
            return Ok(self.block_pairs());
        }
        let mut out = BTreeSet::new();
        for (e, entry) in self.entries.iter().enumerate() {
            if self.two_sided && entry.side != Side::Left {
                continue;
            }
            let cands = self.candidates_for(e, probe_radius)?;
            let chosen: Vec<usize> = if top_n > 0 {
                self.topn_filter(self.vector(e), &cands, top_n)?
            } else {
                cands.into_iter().collect()
            };
            for c in chosen {
                out.insert((e.min(c), e.max(c)));
            }
        }
        Ok(out.into_iter().collect())
    }

    pub(crate) fn raw_parts(&self) -> (&[BTreeMap<u64, Vec<usize>>], &[f64]) {
        (&self.tables, &self.vectors)
    }
}

/// Codes within Hamming distance `radius` of `code`, by increasing distance;
/// within a distance, flip sets are in lexicographic order of bit positions
/// (lower bits first).
pub fn probe_sequence(code: HashCode, radius: usize) -> impl Iterator<Item = HashCode> {
    let k = code.len();
    (0..=radius.min(k)).flat_map(move |d| {
        Combinations::new(k, d).map(move |positions| {
            let mask = positions.iter().fold(0u64, |m, &p| m | 1 << p);
            HashCode::from_bits(code.bits() ^ mask, k)
        })
    })
}

/// Lexicographic `r`-subsets of `0..n`.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, r: usize) -> Self {
        Self {
            n,
            current: (r <= n).then(|| (0..r).collect()),
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.current.take()?;
        let out = cur.clone();
        let r = cur.len();
        let mut next = cur;
        let mut i = r;
        while i > 0 {
            i -= 1;
            if next[i] < self.n - r + i {
                next[i] += 1;
                for j in i + 1..r {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}
