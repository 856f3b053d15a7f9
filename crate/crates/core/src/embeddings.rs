//! Pre-trained word embedding dictionaries in the GloVe text format.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};

use crate::compose::tokenize;
use crate::data::Table;
use crate::error::{Error, Result};

/// Read access to word vectors. Implemented by [`EmbeddingDictionary`] and by
/// the fine-tuning overlay.
pub trait WordVectors {
    fn dim(&self) -> usize;

    /// Exact lookup of an already-normalized token; `None` when absent.
    fn get(&self, token: &str) -> Option<&[f64]>;

    fn unk(&self) -> &[f64];

    /// Total lookup: the token's vector or the UNK vector.
    fn vector(&self, token: &str) -> &[f64] {
        self.get(token).unwrap_or_else(|| self.unk())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDictionary {
    dim: usize,
    words: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
    unk: Vec<f64>,
}

impl EmbeddingDictionary {
    /// Builds a dictionary whose UNK vector is the component-wise mean of
    /// `entries`. Words are lowercased; on collision the first entry wins.
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: AsRef<str>,
    {
        let mut dict = Self::empty(dim)?;
        for (w, v) in entries {
            dict.push(w.as_ref(), &v)?;
        }
        if dict.is_empty() {
            return Err(Error::format(None, "embedding dictionary has no entries"));
        }
        let n = dict.len() as f64;
        let mut unk = vec![0.0; dim];
        for row in dict.data.chunks_exact(dim) {
            for (u, x) in unk.iter_mut().zip(row) {
                *u += x;
            }
        }
        unk.iter_mut().for_each(|u| *u /= n);
        dict.unk = unk;
        Ok(dict)
    }

    /// Builds a dictionary with an explicit UNK vector.
    pub fn with_unk<I, S>(dim: usize, entries: I, unk: Vec<f64>) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: AsRef<str>,
    {
        if unk.len() != dim || unk.iter().any(|x| !x.is_finite()) {
            return Err(Error::Contract("UNK vector must be finite with length d".into()));
        }
        let mut dict = Self::empty(dim)?;
        for (w, v) in entries {
            dict.push(w.as_ref(), &v)?;
        }
        dict.unk = unk;
        Ok(dict)
    }

    fn empty(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::format(None, "embedding dimension must be positive"));
        }
        Ok(Self {
            dim,
            words: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
            unk: vec![0.0; dim],
        })
    }

    fn push(&mut self, word: &str, v: &[f64]) -> Result<bool> {
        if v.len() != self.dim {
            return Err(Error::Contract(format!(
                "vector for {word:?} has length {}, expected {}",
                v.len(),
                self.dim
            )));
        }
        let key = word.to_lowercase();
        if self.index.contains_key(&key) {
            return Ok(false);
        }
        self.index.insert(key.clone(), self.words.len());
        self.words.push(key);
        self.data.extend_from_slice(v);
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Case-normalized total lookup.
    pub fn lookup(&self, word: &str) -> &[f64] {
        if word.chars().any(char::is_uppercase) {
            self.vector(&word.to_lowercase())
        } else {
            self.vector(word)
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.words
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.dim))
    }

    /// A copy with `entries` added or replaced. The UNK vector is kept.
    pub fn with_updates<I>(&self, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut out = self.clone();
        for (w, v) in entries {
            if v.len() != self.dim {
                return Err(Error::Contract(format!("vector for {w:?} has wrong length")));
            }
            match out.index.get(&w) {
                Some(&i) => out.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(&v),
                None => {
                    out.push(&w, &v)?;
                }
            }
        }
        Ok(out)
    }

    /// Writes `word v1 ... vd` lines. Values use shortest round-trip
    /// formatting, so reloading reproduces identical bits. Debug formatting
    /// keeps a `.0` on integral values, so a one-dimensional first row never
    /// reads back as a `count dim` header.
    pub fn write_text<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for (word, v) in self.iter() {
            w.write_all(word.as_bytes())?;
            for x in v {
                write!(w, " {x:?}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl WordVectors for EmbeddingDictionary {
    fn dim(&self) -> usize {
        self.dim
    }

    fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    fn unk(&self) -> &[f64] {
        &self.unk
    }
}

/// Loads a GloVe-style text file, transparently decompressing gzip input.
pub fn load_embedding_text(path: impl AsRef<Path>) -> Result<EmbeddingDictionary> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = read_prefix(&mut file, &mut magic).map_err(|e| Error::io(path, e))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let result = if n == 2 && magic == [0x1f, 0x8b] {
        parse_embedding_text(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        parse_embedding_text(BufReader::new(file))
    };
    result.map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

fn read_prefix<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

/// Parses `word v1 ... vd` lines. A first line made of exactly two integers
/// (word2vec's `count dim` header) is skipped.
pub fn parse_embedding_text<R: BufRead>(reader: R) -> Result<EmbeddingDictionary> {
    let mut dim: Option<usize> = None;
    let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => Error::format(lineno, "invalid UTF-8"),
            _ => Error::io("<embeddings>", e),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        let mut parts = line.split([' ', '\t']).filter(|s| !s.is_empty());
        let Some(word) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        if lineno == 1 && rest.len() == 1 && word.parse::<u64>().is_ok() && rest[0].parse::<u64>().is_ok() {
            continue;
        }
        if rest.is_empty() {
            return Err(Error::format(lineno, format!("word {word:?} has no vector components")));
        }
        let v = rest
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::format(lineno, format!("non-numeric component {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::format(
                    lineno,
                    format!("inconsistent dimension: expected {d}, found {}", v.len()),
                ))
            }
            _ => {}
        }
        entries.push((word.to_owned(), v));
    }
    let dim = dim.ok_or_else(|| Error::format(None, "empty embedding file: dimension undeterminable"))?;
    EmbeddingDictionary::from_entries(dim, entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeCoverage {
    pub attribute: String,
    pub total_tokens: usize,
    pub known_tokens: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub total_tokens: usize,
    pub known_tokens: usize,
    pub ratio: f64,
    pub oov_words: BTreeSet<String>,
    pub per_attribute: Vec<AttributeCoverage>,
}

impl CoverageReport {
    pub fn is_full(&self) -> bool {
        self.known_tokens == self.total_tokens
    }

    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "coverage.total_tokens={}\ncoverage.known_tokens={}\ncoverage.ratio={}\ncoverage.oov_words={}\n",
            self.total_tokens,
            self.known_tokens,
            self.ratio,
            self.oov_words.len()
        );
        for a in &self.per_attribute {
            s.push_str(&format!("coverage.attribute.{}={}\n", a.attribute, a.ratio));
        }
        s
    }
}

fn ratio(known: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        known as f64 / total as f64
    }
}

/// Token coverage of `tables` under `dict`; per-attribute counts are merged
/// positionally across tables and named after the first table's schema.
pub fn coverage<V: WordVectors>(dict: &V, tables: &[&Table]) -> CoverageReport {
    let names: Vec<String> = tables
        .first()
        .map(|t| t.schema().attributes().map(str::to_owned).collect())
        .unwrap_or_default();
    let mut per: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut oov = BTreeSet::new();
    for t in tables {
        for r in t.records() {
            for (k, v) in r.values.iter().enumerate() {
                let counts = per.entry(k).or_default();
                for tok in tokenize(v.as_deref()).tokens {
                    counts.0 += 1;
                    if dict.get(&tok).is_some() {
                        counts.1 += 1;
                    } else {
                        oov.insert(tok);
                    }
                }
            }
        }
    }
    let per_attribute: Vec<AttributeCoverage> = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let (total, known) = per.get(&k).copied().unwrap_or_default();
            AttributeCoverage {
                attribute: name.clone(),
                total_tokens: total,
                known_tokens: known,
                ratio: ratio(known, total),
            }
        })
        .collect();
    let total_tokens = per.values().map(|c| c.0).sum();
    let known_tokens = per.values().map(|c| c.1).sum();
    CoverageReport {
        total_tokens,
        known_tokens,
        ratio: ratio(known_tokens, total_tokens),
        oov_words: oov,
        per_attribute,
    }
}
