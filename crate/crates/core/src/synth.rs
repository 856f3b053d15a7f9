//! Synthetic entity-resolution benchmarks with planted duplicates.
//!
//! The vocabulary is a set of concepts, each with a few synonym spellings.
//! Synonym vectors are small perturbations of a shared concept vector, so
//! substituting synonyms keeps a duplicate close in embedding space, while
//! typos produce out-of-vocabulary tokens.

use std::collections::HashSet;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{write_matches, Label, LabeledPair, Linkage, Record, Schema, Table};
use crate::embeddings::EmbeddingDictionary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Distinct entities. In link mode these form the left table.
    pub entities: usize,
    /// Entities that receive a perturbed copy.
    pub duplicates: usize,
    /// Link mode only: unrelated right-side records.
    pub distractors: usize,
    pub linkage: Linkage,
    pub attributes: usize,
    pub tokens_per_attribute: usize,
    pub concepts: usize,
    pub synonyms_per_concept: usize,
    pub dim: usize,
    /// Standard deviation of a synonym around its concept vector.
    pub synonym_spread: f64,
    /// Per-token probability of synonym substitution in a copy.
    pub synonym_rate: f64,
    /// Per-token probability of a typo in a copy.
    pub typo_rate: f64,
    /// Per-token probability of dropping a token in a copy (never the last
    /// one of an attribute).
    pub drop_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::easy(200, 100, 0)
    }
}

impl SynthConfig {
    /// Duplicates differ only by synonym substitution.
    pub fn easy(entities: usize, duplicates: usize, seed: u64) -> Self {
        Self {
            entities,
            duplicates,
            distractors: 0,
            linkage: Linkage::Link,
            attributes: 3,
            tokens_per_attribute: 3,
            concepts: 400,
            synonyms_per_concept: 3,
            dim: 16,
            synonym_spread: 0.15,
            synonym_rate: 0.5,
            typo_rate: 0.0,
            drop_rate: 0.0,
            seed,
        }
    }

    /// Adds typos and dropped tokens on top of synonym substitution.
    pub fn noisy(entities: usize, duplicates: usize, seed: u64) -> Self {
        Self {
            typo_rate: 0.15,
            drop_rate: 0.1,
            ..Self::easy(entities, duplicates, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entities == 0 || self.attributes == 0 || self.tokens_per_attribute == 0 || self.dim == 0 {
            return Err(Error::Config("entities, attributes, tokens and dim must be positive".into()));
        }
        if self.duplicates > self.entities {
            return Err(Error::Config(format!(
                "cannot plant {} duplicates among {} entities",
                self.duplicates, self.entities
            )));
        }
        if self.concepts == 0 || self.synonyms_per_concept == 0 {
            return Err(Error::Config("vocabulary must be non-empty".into()));
        }
        for (name, p) in [
            ("synonym_rate", self.synonym_rate),
            ("typo_rate", self.typo_rate),
            ("drop_rate", self.drop_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if !(self.synonym_spread >= 0.0 && self.synonym_spread.is_finite()) {
            return Err(Error::Config("synonym_spread must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub left: Table,
    /// `None` in dedup mode.
    pub right: Option<Table>,
    pub matches: Vec<LabeledPair>,
    pub embeddings: EmbeddingDictionary,
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// `n` distinct lowercase pseudo-words.
fn make_words(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut syllables = 2;
    let mut misses = 0;
    while out.len() < n {
        let w: String = (0..syllables)
            .flat_map(|_| {
                [
                    CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char,
                    VOWELS[rng.random_range(0..VOWELS.len())] as char,
                ]
            })
            .collect();
        if seen.insert(w.clone()) {
            out.push(w);
            misses = 0;
        } else {
            misses += 1;
            if misses > 50 {
                syllables += 1;
                misses = 0;
            }
        }
    }
    out
}

fn typo(word: &str, vocab: &HashSet<String>, rng: &mut ChaCha8Rng) -> String {
    loop {
        let mut chars: Vec<char> = word.chars().collect();
        let at = rng.random_range(0..chars.len());
        match rng.random_range(0..3) {
            0 => chars.insert(at, (b'a' + rng.random_range(0..26u8)) as char),
            1 if chars.len() > 1 => {
                chars.remove(at);
            }
            _ => chars[at] = (b'a' + rng.random_range(0..26u8)) as char,
        }
        let w: String = chars.into_iter().collect();
        if !vocab.contains(&w) {
            return w;
        }
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let words = make_words(cfg.concepts * cfg.synonyms_per_concept, &mut rng);
    let vocab: HashSet<String> = words.iter().cloned().collect();
    let groups: Vec<&[String]> = words.chunks(cfg.synonyms_per_concept).collect();

    let mut entries = Vec::with_capacity(words.len());
    for group in &groups {
        let base: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
        for w in group.iter() {
            let v = base
                .iter()
                .map(|b| b + cfg.synonym_spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            entries.push((w.clone(), v));
        }
    }
    let embeddings = EmbeddingDictionary::from_entries(cfg.dim, entries)?;

    // An entity is a list of concept indices per attribute.
    let entity = |rng: &mut ChaCha8Rng| -> Vec<Vec<usize>> {
        (0..cfg.attributes)
            .map(|_| (0..cfg.tokens_per_attribute).map(|_| rng.random_range(0..cfg.concepts)).collect())
            .collect()
    };
    let render = |e: &[Vec<usize>]| -> Vec<Option<String>> {
        e.iter()
            .map(|a| Some(a.iter().map(|&c| groups[c][0].as_str()).collect::<Vec<_>>().join(" ")))
            .collect()
    };
    let perturb = |e: &[Vec<usize>], rng: &mut ChaCha8Rng| -> Vec<Option<String>> {
        e.iter()
            .map(|a| {
                let mut toks = Vec::with_capacity(a.len());
                for (i, &c) in a.iter().enumerate() {
                    let remaining = a.len() - i;
                    if rng.random_bool(cfg.drop_rate) && (remaining > 1 || !toks.is_empty()) {
                        continue;
                    }
                    let group = groups[c];
                    let mut w = if group.len() > 1 && rng.random_bool(cfg.synonym_rate) {
                        group[rng.random_range(1..group.len())].clone()
                    } else {
                        group[0].clone()
                    };
                    if rng.random_bool(cfg.typo_rate) {
                        w = typo(&w, &vocab, rng);
                    }
                    toks.push(w);
                }
                Some(toks.join(" "))
            })
            .collect()
    };

    let columns: Vec<String> = std::iter::once("id".to_owned())
        .chain((1..=cfg.attributes).map(|i| format!("attr{i}")))
        .collect();
    let schema = Schema::new(columns, "id")?;
    let entities: Vec<Vec<Vec<usize>>> = (0..cfg.entities).map(|_| entity(&mut rng)).collect();
    let mut dup_of: Vec<usize> = (0..cfg.entities).collect();
    dup_of.shuffle(&mut rng);
    dup_of.truncate(cfg.duplicates);
    dup_of.sort_unstable();

    match cfg.linkage {
        Linkage::Link => {
            let left: Vec<Record> = entities
                .iter()
                .enumerate()
                .map(|(i, e)| Record::new(format!("l{i}"), render(e)))
                .collect();
            let mut right_src: Vec<(Option<usize>, Vec<Option<String>>)> =
                dup_of.iter().map(|&i| (Some(i), perturb(&entities[i], &mut rng))).collect();
            for _ in 0..cfg.distractors {
                let e = entity(&mut rng);
                right_src.push((None, render(&e)));
            }
            right_src.shuffle(&mut rng);
            let mut matches = Vec::new();
            let mut right = Vec::with_capacity(right_src.len());
            for (j, (src, values)) in right_src.into_iter().enumerate() {
                let id = format!("r{j}");
                if let Some(i) = src {
                    matches.push(LabeledPair::new(format!("l{i}"), id.clone(), Label::Match));
                }
                right.push(Record::new(id, values));
            }
            matches.sort_by(|a, b| (&a.left_id, &a.right_id).cmp(&(&b.left_id, &b.right_id)));
            Ok(SynthData {
                left: Table::new(schema.clone(), left)?,
                right: Some(Table::new(schema, right)?),
                matches,
                embeddings,
            })
        }
        Linkage::Dedup => {
            let mut rows: Vec<(usize, Vec<Option<String>>)> =
                entities.iter().enumerate().map(|(i, e)| (i, render(e))).collect();
            for &i in &dup_of {
                rows.push((i, perturb(&entities[i], &mut rng)));
            }
            rows.shuffle(&mut rng);
            let mut first: Vec<Option<String>> = vec![None; cfg.entities];
            let mut matches = Vec::new();
            let mut records = Vec::with_capacity(rows.len());
            for (j, (src, values)) in rows.into_iter().enumerate() {
                let id = format!("t{j}");
                match &first[src] {
                    Some(other) => {
                        let (a, b) = Linkage::Dedup.key(other, &id);
                        matches.push(LabeledPair::new(a, b, Label::Match));
                    }
                    None => first[src] = Some(id.clone()),
                }
                records.push(Record::new(id, values));
            }
            matches.sort_by(|a, b| (&a.left_id, &a.right_id).cmp(&(&b.left_id, &b.right_id)));
            Ok(SynthData {
                left: Table::new(schema, records)?,
                right: None,
                matches,
                embeddings,
            })
        }
    }
}

impl SynthData {
    /// Writes `left.csv`, `right.csv` (link mode), `matches.csv` and
    /// `embeddings.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, f: &dyn Fn(&mut BufWriter<fs::File>) -> std::io::Result<()>| -> Result<()> {
            let path = dir.join(name);
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            f(&mut w).and_then(|_| std::io::Write::flush(&mut w)).map_err(|e| Error::io(&path, e))
        };
        write("left.csv", &|w| self.left.write_csv(w))?;
        if let Some(right) = &self.right {
            write("right.csv", &|w| right.write_csv(w))?;
        }
        write("matches.csv", &|w| write_matches(w, &self.matches))?;
        write("embeddings.txt", &|w| self.embeddings.write_text(w))?;
        Ok(())
    }
}
