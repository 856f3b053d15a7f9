//! Shared LSTM composer over a tuple's whole token stream.
//!
//! All attributes are fed as one sequence in schema order with state carried
//! across attribute boundaries; the tuple DR is the last hidden state (or the
//! concatenation of both directions' last states).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{TokenSeq, TupleDr};
use crate::embeddings::WordVectors;
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out += W x` for a row-major `rows × x.len()` matrix.
fn matvec_acc(out: &mut [f64], w: &[f64], x: &[f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += Wᵀ g` for a row-major `g.len() × out.len()` matrix.
fn matvec_t_acc(out: &mut [f64], w: &[f64], g: &[f64]) {
    let cols = out.len();
    for (gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if *gi == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += gi * a;
        }
    }
}

/// `w += g xᵀ`.
fn outer_acc(w: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (gi, row) in g.iter().zip(w.chunks_exact_mut(cols)) {
        for (a, xi) in row.iter_mut().zip(x) {
            *a += gi * xi;
        }
    }
}

/// Parameters of one LSTM cell. Gate blocks are stacked in the order input,
/// forget, candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub input_dim: usize,
    pub hidden: usize,
    /// `4·hidden × input_dim`, row-major.
    pub w_input: Vec<f64>,
    /// `4·hidden × hidden`, row-major.
    pub w_hidden: Vec<f64>,
    pub bias: Vec<f64>,
}

impl CellParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            w_input: vec![0.0; 4 * hidden * input_dim],
            w_hidden: vec![0.0; 4 * hidden * hidden],
            bias: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform in `[-1/√hidden, 1/√hidden]`, forget bias set to 1.
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut p = Self::zeros(input_dim, hidden);
        for v in p.w_input.iter_mut().chain(&mut p.w_hidden).chain(&mut p.bias) {
            *v = rng.random_range(-bound..=bound);
        }
        p.bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        p
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden;
        if h == 0 || self.input_dim == 0 {
            return Err(Error::Config("LSTM dimensions must be positive".into()));
        }
        if self.w_input.len() != 4 * h * self.input_dim
            || self.w_hidden.len() != 4 * h * h
            || self.bias.len() != 4 * h
        {
            return Err(Error::Config("LSTM parameter tensors have inconsistent shapes".into()));
        }
        if self.w_input.iter().chain(&self.w_hidden).chain(&self.bias).any(|x| !x.is_finite()) {
            return Err(Error::Config("LSTM parameters must be finite".into()));
        }
        Ok(())
    }

    fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Step {
        let h = self.hidden;
        let mut a = self.bias.clone();
        matvec_acc(&mut a, &self.w_input, x);
        matvec_acc(&mut a, &self.w_hidden, h_prev);
        let i: Vec<f64> = a[..h].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = a[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = a[2 * h..3 * h].iter().map(|v| v.tanh()).collect();
        let o: Vec<f64> = a[3 * h..].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h_out: Vec<f64> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
        Step {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i,
            f,
            g,
            o,
            tanh_c,
            h: h_out,
            c,
        }
    }

    fn slices(&self) -> [&Vec<f64>; 3] {
        [&self.w_input, &self.w_hidden, &self.bias]
    }

    fn slices_mut(&mut self) -> [&mut Vec<f64>; 3] {
        [&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }
}

#[derive(Debug, Clone)]
struct Step {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    c: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Backward,
    Bidirectional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub direction: Direction,
    pub forward: Option<CellParams>,
    pub backward: Option<CellParams>,
}

impl LstmParams {
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, direction: Direction, rng: &mut R) -> Self {
        let forward = matches!(direction, Direction::Forward | Direction::Bidirectional)
            .then(|| CellParams::init(input_dim, hidden, rng));
        let backward = matches!(direction, Direction::Backward | Direction::Bidirectional)
            .then(|| CellParams::init(input_dim, hidden, rng));
        Self {
            input_dim,
            hidden,
            direction,
            forward,
            backward,
        }
    }

    /// Same shape, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            input_dim: self.input_dim,
            hidden: self.hidden,
            direction: self.direction,
            forward: self.forward.as_ref().map(|_| CellParams::zeros(self.input_dim, self.hidden)),
            backward: self.backward.as_ref().map(|_| CellParams::zeros(self.input_dim, self.hidden)),
        }
    }

    pub fn output_len(&self) -> usize {
        match self.direction {
            Direction::Bidirectional => 2 * self.hidden,
            _ => self.hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let want_fwd = matches!(self.direction, Direction::Forward | Direction::Bidirectional);
        let want_bwd = matches!(self.direction, Direction::Backward | Direction::Bidirectional);
        if self.forward.is_some() != want_fwd || self.backward.is_some() != want_bwd {
            return Err(Error::Config("LSTM cells do not match direction".into()));
        }
        for cell in self.forward.iter().chain(&self.backward) {
            cell.check()?;
            if cell.input_dim != self.input_dim || cell.hidden != self.hidden {
                return Err(Error::Config("LSTM cell dimensions disagree".into()));
            }
        }
        Ok(())
    }

    /// Parameter buffers in a fixed order (forward cell, then backward).
    pub fn slices(&self) -> Vec<&Vec<f64>> {
        self.forward.iter().chain(&self.backward).flat_map(CellParams::slices).collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.forward
            .iter_mut()
            .chain(self.backward.iter_mut())
            .flat_map(CellParams::slices_mut)
            .collect()
    }

    pub fn add_scaled(&mut self, other: &LstmParams, scale: f64) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

/// How an attribute with no tokens enters the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmptyAttribute {
    /// One UNK step, so the state still advances at the boundary.
    Unk,
    /// Contributes no steps.
    Skip,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    /// Token per step; `None` marks a UNK placeholder for an empty attribute.
    tokens: Vec<Option<String>>,
    input_dim: usize,
    hidden: usize,
    direction: Direction,
    forward: Vec<Step>,
    /// Steps of the backward pass, in processing (reversed) order.
    backward: Vec<Step>,
}

impl LstmCache {
    pub fn tokens(&self) -> &[Option<String>] {
        &self.tokens
    }

    pub fn output_len(&self) -> usize {
        match self.direction {
            Direction::Bidirectional => 2 * self.hidden,
            _ => self.hidden,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LstmGradients {
    pub params: LstmParams,
    /// Per step: the token (if not a UNK placeholder) and the gradient of its
    /// input vector. Present only when requested.
    pub inputs: Option<Vec<(Option<String>, Vec<f64>)>>,
}

fn run(cell: &CellParams, inputs: &[&[f64]]) -> Vec<Step> {
    let h = cell.hidden;
    let mut hs = vec![0.0; h];
    let mut cs = vec![0.0; h];
    let mut steps = Vec::with_capacity(inputs.len());
    for x in inputs {
        let s = cell.step(x, &hs, &cs);
        hs.clone_from(&s.h);
        cs.clone_from(&s.c);
        steps.push(s);
    }
    steps
}

fn last_hidden(steps: &[Step], hidden: usize) -> Vec<f64> {
    steps.last().map(|s| s.h.clone()).unwrap_or_else(|| vec![0.0; hidden])
}

pub fn lstm_forward<V: WordVectors>(
    attrs: &[TokenSeq],
    vectors: &V,
    params: &LstmParams,
    empty: EmptyAttribute,
) -> Result<(TupleDr, LstmCache)> {
    params.validate()?;
    if params.input_dim != vectors.dim() {
        return Err(Error::Config(format!(
            "LSTM input dimension {} does not match embedding dimension {}",
            params.input_dim,
            vectors.dim()
        )));
    }
    let mut tokens = Vec::new();
    for seq in attrs {
        if seq.is_empty() {
            if empty == EmptyAttribute::Unk {
                tokens.push(None);
            }
        } else {
            tokens.extend(seq.tokens.iter().cloned().map(Some));
        }
    }
    let inputs: Vec<&[f64]> = tokens
        .iter()
        .map(|t| match t {
            Some(t) => vectors.vector(t),
            None => vectors.unk(),
        })
        .collect();

    let h = params.hidden;
    let forward = params.forward.as_ref().map(|c| run(c, &inputs)).unwrap_or_default();
    let backward = match &params.backward {
        Some(c) => {
            let rev: Vec<&[f64]> = inputs.iter().rev().copied().collect();
            run(c, &rev)
        }
        None => Vec::new(),
    };
    let mut out = Vec::with_capacity(params.output_len());
    if params.forward.is_some() {
        out.extend(last_hidden(&forward, h));
    }
    if params.backward.is_some() {
        out.extend(last_hidden(&backward, h));
    }
    let cache = LstmCache {
        tokens,
        input_dim: params.input_dim,
        hidden: h,
        direction: params.direction,
        forward,
        backward,
    };
    Ok((TupleDr::composed(out), cache))
}

/// Backpropagation through time for one direction. Returns input gradients
/// in processing order.
fn bptt(cell: &CellParams, steps: &[Step], upstream: &[f64], grad: &mut CellParams) -> Vec<Vec<f64>> {
    let h = cell.hidden;
    let mut dh = upstream.to_vec();
    let mut dc = vec![0.0; h];
    let mut dxs = vec![Vec::new(); steps.len()];
    let mut da = vec![0.0; 4 * h];
    for (t, s) in steps.iter().enumerate().rev() {
        for k in 0..h {
            let d_o = dh[k] * s.tanh_c[k];
            dc[k] += dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            let d_i = dc[k] * s.g[k];
            let d_g = dc[k] * s.i[k];
            let d_f = dc[k] * s.c_prev[k];
            da[k] = d_i * s.i[k] * (1.0 - s.i[k]);
            da[h + k] = d_f * s.f[k] * (1.0 - s.f[k]);
            da[2 * h + k] = d_g * (1.0 - s.g[k] * s.g[k]);
            da[3 * h + k] = d_o * s.o[k] * (1.0 - s.o[k]);
            dc[k] *= s.f[k];
        }
        outer_acc(&mut grad.w_input, &da, &s.x);
        outer_acc(&mut grad.w_hidden, &da, &s.h_prev);
        for (b, d) in grad.bias.iter_mut().zip(&da) {
            *b += d;
        }
        let mut dx = vec![0.0; cell.input_dim];
        matvec_t_acc(&mut dx, &cell.w_input, &da);
        dxs[t] = dx;
        let mut dh_prev = vec![0.0; h];
        matvec_t_acc(&mut dh_prev, &cell.w_hidden, &da);
        dh = dh_prev;
    }
    dxs
}

/// Gradients of `upstream · DR` with respect to every parameter and,
/// when `with_inputs`, every input vector.
pub fn lstm_backward(
    params: &LstmParams,
    cache: &LstmCache,
    upstream: &[f64],
    with_inputs: bool,
) -> Result<LstmGradients> {
    if params.input_dim != cache.input_dim || params.hidden != cache.hidden || params.direction != cache.direction {
        return Err(Error::Integrity("LSTM cache was produced by different parameters".into()));
    }
    if upstream.len() != cache.output_len() {
        return Err(Error::Integrity(format!(
            "upstream gradient has length {}, DR has length {}",
            upstream.len(),
            cache.output_len()
        )));
    }
    let n = cache.tokens.len();
    let h = params.hidden;
    let mut grads = params.zeros_like();
    let mut dx = vec![vec![0.0; params.input_dim]; n];
    let mut offset = 0;
    if let (Some(cell), Some(g)) = (&params.forward, grads.forward.as_mut()) {
        let d = bptt(cell, &cache.forward, &upstream[..h], g);
        for (acc, v) in dx.iter_mut().zip(d) {
            acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        offset = h;
    }
    if let (Some(cell), Some(g)) = (&params.backward, grads.backward.as_mut()) {
        let d = bptt(cell, &cache.backward, &upstream[offset..offset + h], g);
        for (t, v) in d.into_iter().enumerate() {
            let pos = n - 1 - t;
            dx[pos].iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
    }
    let inputs = with_inputs.then(|| cache.tokens.iter().cloned().zip(dx).collect());
    Ok(LstmGradients { params: grads, inputs })
}
