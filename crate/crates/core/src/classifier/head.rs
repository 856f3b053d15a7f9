use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit against a 0/1 target, computed without
/// overflow.
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Similarity vector → ReLU hidden layer → logistic output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseHead {
    pub input: usize,
    pub hidden: usize,
    /// `hidden × input`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    /// Single output bias, kept as a slice for uniform optimizer access.
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    x: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    pub logit: f64,
}

impl DenseHead {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: vec![0.0],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut h = Self::zeros(input, hidden);
        let b1 = (6.0 / (input + hidden) as f64).sqrt();
        h.w1.iter_mut().for_each(|w| *w = rng.random_range(-b1..=b1));
        let b2 = (6.0 / (hidden + 1) as f64).sqrt();
        h.w2.iter_mut().for_each(|w| *w = rng.random_range(-b2..=b2));
        h
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden == 0 {
            return Err(Error::Config("head dimensions must be positive".into()));
        }
        if self.w1.len() != self.input * self.hidden
            || self.b1.len() != self.hidden
            || self.w2.len() != self.hidden
            || self.b2.len() != 1
        {
            return Err(Error::Config("head parameter shapes are inconsistent".into()));
        }
        if self.slices().iter().any(|s| s.iter().any(|x| !x.is_finite())) {
            return Err(Error::Config("head parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> HeadCache {
        debug_assert_eq!(x.len(), self.input);
        let pre: Vec<f64> = self
            .w1
            .chunks_exact(self.input)
            .zip(&self.b1)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        let act: Vec<f64> = pre.iter().map(|&p| p.max(0.0)).collect();
        let logit = self.b2[0] + act.iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>();
        HeadCache {
            x: x.to_vec(),
            pre,
            act,
            logit,
        }
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.forward(x).logit)
    }

    /// Accumulates `d_logit · ∂logit/∂θ` into `grad` and returns
    /// `∂logit/∂x · d_logit`.
    pub fn backward(&self, cache: &HeadCache, d_logit: f64, grad: &mut DenseHead) -> Vec<f64> {
        grad.b2[0] += d_logit;
        let mut dx = vec![0.0; self.input];
        for j in 0..self.hidden {
            grad.w2[j] += d_logit * cache.act[j];
            if cache.pre[j] <= 0.0 {
                continue;
            }
            let d_pre = d_logit * self.w2[j];
            grad.b1[j] += d_pre;
            let row = j * self.input..(j + 1) * self.input;
            for ((g, w), (x, d)) in grad.w1[row.clone()]
                .iter_mut()
                .zip(&self.w1[row])
                .zip(cache.x.iter().zip(dx.iter_mut()))
            {
                *g += d_pre * x;
                *d += d_pre * w;
            }
        }
        dx
    }

    /// Squared L2 norm of the weight matrices (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.w1.iter().chain(&self.w2).map(|w| w * w).sum()
    }

    /// Adds the gradient of `l2 · ‖W‖²` into `grad`.
    pub fn add_l2_grad(&self, l2: f64, grad: &mut DenseHead) {
        for (g, w) in grad.w1.iter_mut().zip(&self.w1) {
            *g += 2.0 * l2 * w;
        }
        for (g, w) in grad.w2.iter_mut().zip(&self.w2) {
            *g += 2.0 * l2 * w;
        }
    }

    pub fn slices(&self) -> [&Vec<f64>; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn slices_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.slices_mut() {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }
}
