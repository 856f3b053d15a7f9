//! Pairwise similarity vectors fed to the classification head.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compose::{DrLayout, TupleDr};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    /// Cosine per attribute slice of concatenated DRs.
    Cosine,
    Difference,
    Hadamard,
    /// `[a − b, a ⊙ b]`.
    DifferenceHadamard,
}

impl SimilarityKind {
    /// Length of the similarity vector for DRs of `layout`.
    pub fn output_len(self, layout: DrLayout) -> Result<usize> {
        match (self, layout) {
            (SimilarityKind::Cosine, DrLayout::Concatenated { attributes, .. }) => Ok(attributes),
            (SimilarityKind::Difference | SimilarityKind::Hadamard, DrLayout::Composed { len }) => Ok(len),
            (SimilarityKind::DifferenceHadamard, DrLayout::Composed { len }) => Ok(2 * len),
            (kind, layout) => Err(Error::Contract(format!(
                "similarity {kind} is not defined for {layout:?} representations"
            ))),
        }
    }
}

impl fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimilarityKind::Cosine => "cosine",
            SimilarityKind::Difference => "difference",
            SimilarityKind::Hadamard => "hadamard",
            SimilarityKind::DifferenceHadamard => "difference+hadamard",
        })
    }
}

impl FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(SimilarityKind::Cosine),
            "difference" => Ok(SimilarityKind::Difference),
            "hadamard" => Ok(SimilarityKind::Hadamard),
            "difference+hadamard" => Ok(SimilarityKind::DifferenceHadamard),
            other => Err(Error::Config(format!("unknown similarity kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityVector {
    pub kind: SimilarityKind,
    pub values: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine of two equal-length slices; 0 when either has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Gradients of `cosine(a, b)` with respect to `a` and `b`, scaled by `g`.
fn cosine_grad(a: &[f64], b: &[f64], g: f64, ga: &mut [f64], gb: &mut [f64]) {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 || g == 0.0 {
        return;
    }
    let c = dot(a, b) / (na * nb);
    for k in 0..a.len() {
        ga[k] += g * (b[k] / (na * nb) - c * a[k] / (na * na));
        gb[k] += g * (a[k] / (na * nb) - c * b[k] / (nb * nb));
    }
}

fn concatenated_layout(a: &TupleDr, b: &TupleDr) -> Result<(usize, usize)> {
    match (a.layout, b.layout) {
        (DrLayout::Concatenated { attributes, dim }, rhs) if rhs == a.layout => Ok((attributes, dim)),
        _ => Err(Error::Contract(format!(
            "per-attribute cosine needs identical concatenated layouts, got {:?} and {:?}",
            a.layout, b.layout
        ))),
    }
}

fn same_len(a: &TupleDr, b: &TupleDr) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "DR lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn sim_cosine_per_attr(a: &TupleDr, b: &TupleDr) -> Result<SimilarityVector> {
    let (m, d) = concatenated_layout(a, b)?;
    let values = (0..m)
        .map(|k| cosine(&a.vector[k * d..(k + 1) * d], &b.vector[k * d..(k + 1) * d]))
        .collect();
    Ok(SimilarityVector {
        kind: SimilarityKind::Cosine,
        values,
    })
}

pub fn sim_difference(a: &TupleDr, b: &TupleDr) -> Result<SimilarityVector> {
    same_len(a, b)?;
    Ok(SimilarityVector {
        kind: SimilarityKind::Difference,
        values: a.vector.iter().zip(&b.vector).map(|(x, y)| x - y).collect(),
    })
}

pub fn sim_hadamard(a: &TupleDr, b: &TupleDr) -> Result<SimilarityVector> {
    same_len(a, b)?;
    Ok(SimilarityVector {
        kind: SimilarityKind::Hadamard,
        values: a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).collect(),
    })
}

pub fn similarity(kind: SimilarityKind, a: &TupleDr, b: &TupleDr) -> Result<SimilarityVector> {
    match kind {
        SimilarityKind::Cosine => sim_cosine_per_attr(a, b),
        SimilarityKind::Difference => sim_difference(a, b),
        SimilarityKind::Hadamard => sim_hadamard(a, b),
        SimilarityKind::DifferenceHadamard => {
            let mut values = sim_difference(a, b)?.values;
            values.extend(sim_hadamard(a, b)?.values);
            Ok(SimilarityVector { kind, values })
        }
    }
}

/// Backpropagates `upstream` (gradient w.r.t. the similarity vector) to both
/// DRs.
pub fn similarity_backward(
    kind: SimilarityKind,
    a: &TupleDr,
    b: &TupleDr,
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ga = vec![0.0; a.len()];
    let mut gb = vec![0.0; b.len()];
    match kind {
        SimilarityKind::Cosine => {
            let (m, d) = concatenated_layout(a, b)?;
            for (k, &u) in upstream.iter().enumerate().take(m) {
                let r = k * d..(k + 1) * d;
                cosine_grad(&a.vector[r.clone()], &b.vector[r.clone()], u, &mut ga[r.clone()], &mut gb[r]);
            }
        }
        SimilarityKind::Difference => {
            same_len(a, b)?;
            for k in 0..a.len() {
                ga[k] = upstream[k];
                gb[k] = -upstream[k];
            }
        }
        SimilarityKind::Hadamard => {
            same_len(a, b)?;
            for k in 0..a.len() {
                ga[k] = upstream[k] * b.vector[k];
                gb[k] = upstream[k] * a.vector[k];
            }
        }
        SimilarityKind::DifferenceHadamard => {
            same_len(a, b)?;
            let n = a.len();
            for k in 0..n {
                ga[k] = upstream[k] + upstream[n + k] * b.vector[k];
                gb[k] = -upstream[k] + upstream[n + k] * a.vector[k];
            }
        }
    }
    Ok((ga, gb))
}
