use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target collision probabilities for near (`p1`) and far (`p2`) pairs over a
/// table of `n` tuples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningGoal {
    pub p1: f64,
    pub p2: f64,
    pub n: u64,
}

impl TuningGoal {
    pub fn validate(&self) -> Result<()> {
        if !(self.p2 > 0.0 && self.p2 < self.p1 && self.p1 < 1.0) {
            return Err(Error::Contract(format!(
                "tuning needs 0 < p2 < p1 < 1, got p1 = {}, p2 = {}",
                self.p1, self.p2
            )));
        }
        if self.n == 0 {
            return Err(Error::Contract("tuning needs n ≥ 1".into()));
        }
        Ok(())
    }
}

/// `K = ⌈ln n / ln(1/p2)⌉`, `L = ⌈n^ρ⌉` with `ρ = ln(1/p1) / ln(1/p2)`, both
/// clamped to at least 1.
pub fn tune_params(goal: &TuningGoal) -> Result<(usize, usize)> {
    goal.validate()?;
    let n = goal.n as f64;
    let inv_p2 = (1.0 / goal.p2).ln();
    let rho = (1.0 / goal.p1).ln() / inv_p2;
    let k = (n.ln() / inv_p2).ceil().max(1.0);
    let l = n.powf(rho).ceil().max(1.0);
    Ok((k as usize, l as usize))
}
