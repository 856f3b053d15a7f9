//! Dataset-driven retrofitting of word vectors.
//!
//! Words that co-occur in a tuple are linked in a graph. Out-of-vocabulary
//! words get an initial vector from their most frequent in-vocabulary
//! neighbours, then every vertex is pulled toward its original vector and
//! toward its neighbours by minimizing
//!
//! ```text
//! Ψ(Q) = Σ_i α‖q_i − q̂_i‖² + Σ_(i,j)∈E β·c_ij‖q_i − q_j‖²
//! ```
//!
//! with Gauss–Seidel sweeps in lexicographic vertex order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::compose::tokenize;
use crate::data::Table;
use crate::embeddings::{EmbeddingDictionary, WordVectors};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoocGraph {
    pub vertices: BTreeSet<String>,
    /// Unordered pairs stored with the lexicographically smaller word first.
    pub edges: BTreeMap<(String, String), u32>,
    /// Vertices with no dictionary vector.
    pub oov: BTreeSet<String>,
}

impl CoocGraph {
    /// Neighbours of every vertex with their co-occurrence counts.
    pub fn adjacency(&self) -> BTreeMap<&str, Vec<(&str, u32)>> {
        let mut adj: BTreeMap<&str, Vec<(&str, u32)>> = BTreeMap::new();
        for ((a, b), &c) in &self.edges {
            adj.entry(a).or_default().push((b, c));
            adj.entry(b).or_default().push((a, c));
        }
        adj
    }

    pub fn edge_count(&self, a: &str, b: &str) -> u32 {
        let key = if a <= b { (a.to_owned(), b.to_owned()) } else { (b.to_owned(), a.to_owned()) };
        self.edges.get(&key).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrofitConfig {
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub init_neighbors: usize,
}

impl Default for RetrofitConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            iterations: 10,
            init_neighbors: 5,
        }
    }
}

impl RetrofitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0)
            || !self.alpha.is_finite()
            || !self.beta.is_finite()
        {
            return Err(Error::Config("retrofit alpha and beta must be non-negative with positive sum".into()));
        }
        if self.init_neighbors == 0 {
            return Err(Error::Config("retrofit init_neighbors must be positive".into()));
        }
        Ok(())
    }
}

/// One vertex per distinct token; an edge's count is the number of tuples in
/// which both words appear.
pub fn build_graph<V: WordVectors>(tables: &[&Table], dict: &V) -> CoocGraph {
    let mut g = CoocGraph::default();
    for t in tables {
        for r in t.records() {
            let words: BTreeSet<String> = r
                .values
                .iter()
                .flat_map(|v| tokenize(v.as_deref()).tokens)
                .collect();
            let words: Vec<String> = words.into_iter().collect();
            for (i, a) in words.iter().enumerate() {
                for b in &words[i + 1..] {
                    *g.edges.entry((a.clone(), b.clone())).or_insert(0) += 1;
                }
            }
            g.vertices.extend(words);
        }
    }
    g.oov = g.vertices.iter().filter(|w| dict.get(w).is_none()).cloned().collect();
    g
}

/// Extends `dict` with a vector for every OOV vertex: the mean of its `k`
/// most frequent in-dictionary neighbours (ties by word), or UNK when it has
/// none.
pub fn init_oov(graph: &CoocGraph, dict: &EmbeddingDictionary, k: usize) -> Result<EmbeddingDictionary> {
    let adj = graph.adjacency();
    let d = dict.dim();
    let mut added = Vec::with_capacity(graph.oov.len());
    for u in &graph.oov {
        let mut nbrs: Vec<(&str, u32)> = adj
            .get(u.as_str())
            .map(|v| v.iter().copied().filter(|(w, _)| dict.get(w).is_some()).collect())
            .unwrap_or_default();
        nbrs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        nbrs.truncate(k);
        let v = if nbrs.is_empty() {
            dict.unk().to_vec()
        } else {
            let mut acc = vec![0.0; d];
            for (w, _) in &nbrs {
                for (a, x) in acc.iter_mut().zip(dict.vector(w)) {
                    *a += x;
                }
            }
            acc.iter_mut().for_each(|a| *a /= nbrs.len() as f64);
            acc
        };
        added.push((u.clone(), v));
    }
    dict.with_updates(added)
}

struct Indexed {
    words: Vec<String>,
    /// (neighbour index, count) per vertex.
    adj: Vec<Vec<(usize, f64)>>,
}

fn index_graph(graph: &CoocGraph) -> Indexed {
    let words: Vec<String> = graph.vertices.iter().cloned().collect();
    let pos: BTreeMap<&str, usize> = words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let mut adj = vec![Vec::new(); words.len()];
    for ((a, b), &c) in &graph.edges {
        let (Some(&i), Some(&j)) = (pos.get(a.as_str()), pos.get(b.as_str())) else {
            continue;
        };
        adj[i].push((j, c as f64));
        adj[j].push((i, c as f64));
    }
    Indexed { words, adj }
}

fn initial_vectors(idx: &Indexed, dict: &EmbeddingDictionary) -> Result<Vec<Vec<f64>>> {
    idx.words
        .iter()
        .map(|w| {
            dict.get(w)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::Precondition(format!("vertex {w:?} has no initial vector")))
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn psi(idx: &Indexed, q: &[Vec<f64>], q_hat: &[Vec<f64>], cfg: &RetrofitConfig) -> f64 {
    let mut total = 0.0;
    for i in 0..q.len() {
        total += cfg.alpha * sq_dist(&q[i], &q_hat[i]);
        for &(j, c) in &idx.adj[i] {
            if j > i {
                total += cfg.beta * c * sq_dist(&q[i], &q[j]);
            }
        }
    }
    total
}

/// Ψ of `current` relative to the anchors in `original`, over the graph's
/// vertices.
pub fn objective(
    graph: &CoocGraph,
    original: &EmbeddingDictionary,
    current: &EmbeddingDictionary,
    cfg: &RetrofitConfig,
) -> Result<f64> {
    let idx = index_graph(graph);
    let q_hat = initial_vectors(&idx, original)?;
    let q = initial_vectors(&idx, current)?;
    Ok(psi(&idx, &q, &q_hat, cfg))
}

/// Result of [`retrofit`] with Ψ after each sweep (`history[0]` is the
/// starting value).
#[derive(Debug, Clone)]
pub struct RetrofitOutcome {
    pub dictionary: EmbeddingDictionary,
    pub history: Vec<f64>,
}

/// Runs `cfg.iterations` coordinate-descent sweeps. Every graph vertex must
/// already have a vector in `dict` (see [`init_oov`]); those vectors are the
/// anchors `q̂`.
pub fn retrofit(dict: &EmbeddingDictionary, graph: &CoocGraph, cfg: &RetrofitConfig) -> Result<RetrofitOutcome> {
    cfg.validate()?;
    let idx = index_graph(graph);
    let q_hat = initial_vectors(&idx, dict)?;
    let mut q = q_hat.clone();
    let d = dict.dim();
    let mut history = vec![psi(&idx, &q, &q_hat, cfg)];
    let mut next = vec![0.0; d];
    for _ in 0..cfg.iterations {
        for i in 0..q.len() {
            let weight: f64 = idx.adj[i].iter().map(|&(_, c)| c).sum();
            let denom = cfg.alpha + cfg.beta * weight;
            if denom == 0.0 {
                continue;
            }
            for (n, x) in next.iter_mut().zip(&q_hat[i]) {
                *n = cfg.alpha * x;
            }
            for &(j, c) in &idx.adj[i] {
                for (n, x) in next.iter_mut().zip(&q[j]) {
                    *n += cfg.beta * c * x;
                }
            }
            for (dst, n) in q[i].iter_mut().zip(&next) {
                *dst = n / denom;
            }
        }
        history.push(psi(&idx, &q, &q_hat, cfg));
    }
    let dictionary = dict.with_updates(idx.words.into_iter().zip(q))?;
    Ok(RetrofitOutcome { dictionary, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_table;
    use crate::embeddings::parse_embedding_text;

    const TABLE3: &str =
        "Bill 0.4 0.8 0.9\nWilliam 0.3 0.9 0.7\nGates 0.5 0.8 0.8\nSeattle 0.1 0.1 0.2\n";

    fn graph_of(edges: &[(&str, &str, u32)], oov: &[&str]) -> CoocGraph {
        let mut g = CoocGraph::default();
        for &(a, b, c) in edges {
            g.vertices.insert(a.into());
            g.vertices.insert(b.into());
            let key = if a < b { (a.into(), b.into()) } else { (b.into(), a.into()) };
            g.edges.insert(key, c);
        }
        g.oov = oov.iter().map(|s| s.to_string()).collect();
        g
    }

    #[test]
    fn single_tuple_graph() {
        let d = parse_embedding_text(TABLE3.as_bytes()).unwrap();
        let t = parse_table("id,Name,City\n1,Bill Gates,Seattle\n", "id").unwrap();
        let g = build_graph(&[&t], &d);
        assert_eq!(g.vertices.iter().collect::<Vec<_>>(), ["bill", "gates", "seattle"]);
        assert_eq!(g.edges.len(), 3);
        assert!(g.edges.values().all(|&c| c == 1));
        assert!(g.oov.is_empty());
    }

    #[test]
    fn counts_accumulate_per_tuple_and_oov_detected() {
        let d = parse_embedding_text(TABLE3.as_bytes()).unwrap();
        let t = parse_table(
            "id,Name,Note\n1,Bill Gates,p53\n2,William Gates gates,p53\n3,,\n",
            "id",
        )
        .unwrap();
        let g = build_graph(&[&t], &d);
        assert_eq!(g.edge_count("gates", "p53"), 2);
        assert_eq!(g.edge_count("p53", "gates"), 2);
        assert_eq!(g.edge_count("bill", "william"), 0);
        assert!(g.oov.contains("p53"));
        assert!(g.oov.is_subset(&g.vertices));
        let empty = parse_table("id,a\n", "id").unwrap();
        assert!(build_graph(&[&empty], &d).vertices.is_empty());
    }

    #[test]
    fn oov_initialization() {
        let d = parse_embedding_text(TABLE3.as_bytes()).unwrap();
        let g = graph_of(&[("seattle", "zz", 1)], &["zz"]);
        assert_eq!(init_oov(&g, &d, 5).unwrap().lookup("zz"), &[0.1, 0.1, 0.2]);

        let mut g = graph_of(&[], &["lonely"]);
        g.vertices.insert("lonely".into());
        assert_eq!(init_oov(&g, &d, 5).unwrap().lookup("lonely"), d.unk());

        let g = graph_of(&[("bill", "x", 3), ("gates", "x", 1)], &["x"]);
        assert_eq!(init_oov(&g, &d, 1).unwrap().lookup("x"), d.lookup("bill"));

        // tie on count: lexicographic order picks bill over gates
        let g = graph_of(&[("gates", "y", 2), ("bill", "y", 2), ("z", "y", 9)], &["y", "z"]);
        let e = init_oov(&g, &d, 1).unwrap();
        assert_eq!(e.lookup("y"), d.lookup("bill"));
    }

    #[test]
    fn zero_iterations_and_edgeless_are_identity() {
        let d = parse_embedding_text(TABLE3.as_bytes()).unwrap();
        let g = graph_of(&[("bill", "gates", 2)], &[]);
        let cfg = RetrofitConfig { iterations: 0, ..Default::default() };
        assert_eq!(retrofit(&d, &g, &cfg).unwrap().dictionary, d);

        let mut g = CoocGraph::default();
        g.vertices.extend(["bill".to_string(), "seattle".to_string()]);
        let out = retrofit(&d, &g, &RetrofitConfig::default()).unwrap();
        assert_eq!(out.dictionary, d);
    }

    #[test]
    fn two_node_sweep_by_hand() {
        let d = parse_embedding_text(&b"a 0\nb 2\n"[..]).unwrap();
        let g = graph_of(&[("a", "b", 1)], &[]);
        let cfg = RetrofitConfig { alpha: 1.0, beta: 1.0, iterations: 1, init_neighbors: 1 };
        let out = retrofit(&d, &g, &cfg).unwrap().dictionary;
        assert_eq!(out.lookup("a"), &[1.0]);
        assert_eq!(out.lookup("b"), &[1.5]);
    }

    #[test]
    fn missing_vertex_vector_is_precondition_error() {
        let d = parse_embedding_text(TABLE3.as_bytes()).unwrap();
        let g = graph_of(&[("bill", "nope", 1)], &["nope"]);
        assert!(matches!(
            retrofit(&d, &g, &RetrofitConfig::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(RetrofitConfig { alpha: 0.0, beta: 0.0, ..Default::default() }.validate().is_err());
        assert!(RetrofitConfig { alpha: -1.0, ..Default::default() }.validate().is_err());
        assert!(RetrofitConfig { init_neighbors: 0, ..Default::default() }.validate().is_err());
        RetrofitConfig::default().validate().unwrap();
    }
}
