//! Match/non-match classification over similarity vectors, with the training
//! protocol around it: threshold-based negative sampling, label noise,
//! mini-batch Adam and stratified K-fold evaluation.

mod adam;
mod head;
mod kfold;
mod model;
mod sampling;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::SimilarityKind;

pub use adam::Adam;
pub use head::{bce_with_logit, DenseHead, HeadCache};
pub use kfold::{kfold_eval, kfold_with, stratified_folds, FoldOutcome, KFoldReport};
pub use model::{decode_model, encode_model, MODEL_FORMAT};
pub use sampling::{inject_noise, percentile, positive_threshold, sample_negatives, NegativeSample, PairUniverse};
pub use train::{predict, train, train_head, Composer, OverlayVectors, TrainHistory, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Composition {
    Avg,
    Lstm,
    Bilstm,
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Composition::Avg => "avg",
            Composition::Lstm => "lstm",
            Composition::Bilstm => "bilstm",
        })
    }
}

impl FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(Composition::Avg),
            "lstm" => Ok(Composition::Lstm),
            "bilstm" => Ok(Composition::Bilstm),
            other => Err(Error::Config(format!("unknown composition {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub embedding_update_rate: f64,
    /// Non-duplicates sampled per duplicate.
    pub neg_ratio: usize,
    pub folds: usize,
    pub noise_fraction: f64,
    pub seed: u64,
    pub composition: Composition,
    pub similarity: SimilarityKind,
    /// LSTM memory size.
    pub lstm_hidden: usize,
    /// Width of the head's hidden layer.
    pub head_hidden: usize,
    pub fine_tune_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 20,
            batch_size: 16,
            l2: 1e-3,
            embedding_update_rate: 0.01,
            neg_ratio: 4,
            folds: 5,
            noise_fraction: 0.0,
            seed: 0,
            composition: Composition::Avg,
            similarity: SimilarityKind::Cosine,
            lstm_hidden: 150,
            head_hidden: 50,
            fine_tune_embeddings: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("train.{name} must be positive, got {v}")))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        positive("embedding_update_rate", self.embedding_update_rate)?;
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("train.l2 must be non-negative, got {}", self.l2)));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.lstm_hidden == 0 || self.head_hidden == 0 {
            return Err(Error::Config("epochs, batch size and layer widths must be positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("train.folds must be at least 2, got {}", self.folds)));
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(Error::Config(format!(
                "train.noise_fraction must be in [0, 1], got {}",
                self.noise_fraction
            )));
        }
        let cosine = self.similarity == SimilarityKind::Cosine;
        let avg = self.composition == Composition::Avg;
        if cosine != avg {
            return Err(Error::Config(format!(
                "similarity {} is incompatible with composition {}",
                self.similarity, self.composition
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_settings() {
        let bad = [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { noise_fraction: 1.5, ..Default::default() },
            TrainConfig { folds: 1, ..Default::default() },
            TrainConfig { similarity: SimilarityKind::Difference, ..Default::default() },
            TrainConfig { composition: Composition::Lstm, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        TrainConfig {
            composition: Composition::Bilstm,
            similarity: SimilarityKind::DifferenceHadamard,
            ..Default::default()
        }
        .validate()
        .unwrap();
    }

    #[test]
    fn composition_names() {
        for c in [Composition::Avg, Composition::Lstm, Composition::Bilstm] {
            assert_eq!(c.to_string().parse::<Composition>().unwrap(), c);
        }
    }
}
