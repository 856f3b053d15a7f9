//! Tokenization and tuple-level distributed representations.

pub mod lstm;

use serde::{Deserialize, Serialize};

use crate::data::Record;
use crate::embeddings::WordVectors;
use crate::error::{Error, Result};

pub use lstm::{
    lstm_backward, lstm_forward, CellParams, Direction, EmptyAttribute, LstmCache, LstmGradients,
    LstmParams,
};

/// Normalized word tokens of one attribute value. Never contains an empty
/// token.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
}

impl TokenSeq {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }
}

/// Lowercases, splits on whitespace and trims non-alphanumeric characters
/// from both ends of each token.
pub fn tokenize(text: Option<&str>) -> TokenSeq {
    let Some(text) = text else {
        return TokenSeq::default();
    };
    let tokens = text
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    TokenSeq { tokens }
}

pub fn tokenize_record(record: &Record) -> Vec<TokenSeq> {
    record.values.iter().map(|v| tokenize(v.as_deref())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DrLayout {
    /// `attributes` slices of `dim` each.
    Concatenated { attributes: usize, dim: usize },
    /// Output of a recurrent composer.
    Composed { len: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TupleDr {
    pub layout: DrLayout,
    pub vector: Vec<f64>,
}

impl TupleDr {
    pub fn concatenated(attributes: usize, dim: usize, vector: Vec<f64>) -> Result<Self> {
        if vector.len() != attributes * dim {
            return Err(Error::Contract(format!(
                "concatenated DR has length {}, expected {attributes}x{dim}",
                vector.len()
            )));
        }
        Ok(Self {
            layout: DrLayout::Concatenated { attributes, dim },
            vector,
        })
    }

    pub fn composed(vector: Vec<f64>) -> Self {
        Self {
            layout: DrLayout::Composed { len: vector.len() },
            vector,
        }
    }

    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }

    /// The `k`-th attribute slice of a concatenated DR.
    pub fn attribute(&self, k: usize) -> Option<&[f64]> {
        match self.layout {
            DrLayout::Concatenated { attributes, dim } if k < attributes => {
                Some(&self.vector[k * dim..(k + 1) * dim])
            }
            _ => None,
        }
    }
}

/// Averaged composition: mean token vector per attribute (UNK for an empty
/// attribute), concatenated in schema order.
pub fn compose_avg<V: WordVectors>(record: &Record, vectors: &V) -> TupleDr {
    compose_avg_tokens(&tokenize_record(record), vectors)
}

pub fn compose_avg_tokens<V: WordVectors>(attrs: &[TokenSeq], vectors: &V) -> TupleDr {
    let d = vectors.dim();
    let mut out = Vec::with_capacity(attrs.len() * d);
    for seq in attrs {
        if seq.is_empty() {
            out.extend_from_slice(vectors.unk());
            continue;
        }
        let start = out.len();
        out.resize(start + d, 0.0);
        let slot = &mut out[start..];
        for tok in &seq.tokens {
            for (s, x) in slot.iter_mut().zip(vectors.vector(tok)) {
                *s += x;
            }
        }
        let n = seq.len() as f64;
        slot.iter_mut().for_each(|s| *s /= n);
    }
    TupleDr {
        layout: DrLayout::Concatenated {
            attributes: attrs.len(),
            dim: d,
        },
        vector: out,
    }
}

/// Spreads the gradient of an averaged DR back onto its tokens: each token of
/// attribute `k` receives `grad_k / n_k`. Empty attributes contribute nothing.
pub fn avg_backward(attrs: &[TokenSeq], dim: usize, grad: &[f64]) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    for (k, seq) in attrs.iter().enumerate() {
        if seq.is_empty() {
            continue;
        }
        let g = &grad[k * dim..(k + 1) * dim];
        let n = seq.len() as f64;
        for tok in &seq.tokens {
            out.push((tok.clone(), g.iter().map(|x| x / n).collect()));
        }
    }
    out
}
