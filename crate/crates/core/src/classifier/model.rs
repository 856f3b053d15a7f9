use serde::{Deserialize, Serialize};

use super::train::{Composer, TrainedModel};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "erdr-model/1";

#[derive(Serialize)]
struct Envelope<'a> {
    format: &'a str,
    model: &'a TrainedModel,
}

#[derive(Deserialize)]
struct OwnedEnvelope {
    format: String,
    model: TrainedModel,
}

pub fn encode_model(model: &TrainedModel) -> String {
    serde_json::to_string_pretty(&Envelope {
        format: MODEL_FORMAT,
        model,
    })
    .expect("model serialization cannot fail")
}

/// Parses and validates a model file.
pub fn decode_model(text: &str) -> Result<TrainedModel> {
    let env: OwnedEnvelope = serde_json::from_str(text)
        .map_err(|e| Error::format(Some(e.line()).filter(|&l| l > 0), format!("model: {e}")))?;
    if env.format != MODEL_FORMAT {
        return Err(Error::format(None, format!("unsupported model format {:?}", env.format)));
    }
    let m = env.model;
    m.config.validate()?;
    m.head.validate()?;
    if m.dim == 0 || m.arity == 0 {
        return Err(Error::Config("model dimension and arity must be positive".into()));
    }
    if m.head.hidden != m.config.head_hidden {
        return Err(Error::Config("head width disagrees with configuration".into()));
    }
    if let Composer::Lstm(p) = &m.composer {
        p.validate()?;
        if p.input_dim != m.dim || p.hidden != m.config.lstm_hidden {
            return Err(Error::Config("LSTM shape disagrees with model configuration".into()));
        }
    }
    let want_avg = m.config.composition == super::Composition::Avg;
    if want_avg != (m.composer == Composer::Avg) {
        return Err(Error::Config("composer disagrees with configured composition".into()));
    }
    let input = m.composer.feature_len(m.config.similarity, m.arity, m.dim)?;
    if input != m.head.input {
        return Err(Error::Config(format!(
            "head expects {} inputs, composer produces {input}",
            m.head.input
        )));
    }
    if !(m.threshold > 0.0 && m.threshold < 1.0) {
        return Err(Error::Config(format!("decision threshold {} outside (0, 1)", m.threshold)));
    }
    for (w, v) in &m.overlay {
        if v.len() != m.dim || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config(format!("fine-tuned vector for {w:?} is malformed")));
        }
    }
    Ok(m)
}
