use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::head::{bce_with_logit, sigmoid, DenseHead};
use super::{Composition, TrainConfig};
use crate::compose::lstm::{lstm_backward, lstm_forward, Direction, EmptyAttribute, LstmCache, LstmParams};
use crate::compose::{avg_backward, compose_avg_tokens, tokenize_record, DrLayout, TokenSeq, TupleDr};
use crate::data::{align_schemas, validate_pairs, Label, LabeledPair, Record, Table};
use crate::embeddings::{EmbeddingDictionary, WordVectors};
use crate::error::{Error, Result};
use crate::similarity::{similarity, similarity_backward, SimilarityKind};

/// Base dictionary with fine-tuned vectors layered on top.
pub struct OverlayVectors<'a> {
    pub base: &'a EmbeddingDictionary,
    pub overlay: &'a BTreeMap<String, Vec<f64>>,
}

impl WordVectors for OverlayVectors<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn get(&self, token: &str) -> Option<&[f64]> {
        match self.overlay.get(token) {
            Some(v) => Some(v),
            None => self.base.get(token),
        }
    }

    fn unk(&self) -> &[f64] {
        self.base.unk()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "params")]
pub enum Composer {
    Avg,
    Lstm(LstmParams),
}

impl Composer {
    fn compose<V: WordVectors>(&self, attrs: &[TokenSeq], vectors: &V) -> Result<(TupleDr, Option<LstmCache>)> {
        match self {
            Composer::Avg => Ok((compose_avg_tokens(attrs, vectors), None)),
            Composer::Lstm(p) => {
                let (dr, cache) = lstm_forward(attrs, vectors, p, EmptyAttribute::Unk)?;
                Ok((dr, Some(cache)))
            }
        }
    }

    /// Length of the similarity vector this composer produces for `kind`.
    pub fn feature_len(&self, kind: SimilarityKind, arity: usize, dim: usize) -> Result<usize> {
        let layout = match self {
            Composer::Avg => DrLayout::Concatenated { attributes: arity, dim },
            Composer::Lstm(p) => DrLayout::Composed { len: p.output_len() },
        };
        kind.output_len(layout)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean regularized loss over the full training set after each epoch.
    pub epoch_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub composer: Composer,
    pub head: DenseHead,
    /// Probability at or above which a pair is declared a match.
    pub threshold: f64,
    /// Fine-tuned word vectors; empty unless fine-tuning was enabled.
    pub overlay: BTreeMap<String, Vec<f64>>,
    pub dim: usize,
    pub arity: usize,
}

impl TrainedModel {
    pub fn vectors<'a>(&'a self, dict: &'a EmbeddingDictionary) -> OverlayVectors<'a> {
        OverlayVectors {
            base: dict,
            overlay: &self.overlay,
        }
    }

    pub fn compose(&self, record: &Record, dict: &EmbeddingDictionary) -> Result<TupleDr> {
        self.check(record, dict)?;
        Ok(self.composer.compose(&tokenize_record(record), &self.vectors(dict))?.0)
    }

    /// Probability that two composed tuples match.
    pub fn score(&self, a: &TupleDr, b: &TupleDr) -> Result<f64> {
        let s = similarity(self.config.similarity, a, b)?;
        if s.values.len() != self.head.input {
            return Err(Error::Integrity(format!(
                "similarity vector has length {}, model expects {}",
                s.values.len(),
                self.head.input
            )));
        }
        Ok(self.head.probability(&s.values))
    }

    pub fn label(&self, p: f64) -> Label {
        if p >= self.threshold {
            Label::Match
        } else {
            Label::NonMatch
        }
    }

    fn check(&self, record: &Record, dict: &EmbeddingDictionary) -> Result<()> {
        if record.values.len() != self.arity {
            return Err(Error::Alignment(format!(
                "record {:?} has {} attributes, model was trained on {}",
                record.id,
                record.values.len(),
                self.arity
            )));
        }
        if dict.dim() != self.dim {
            return Err(Error::Config(format!(
                "embedding dimension {} does not match model dimension {}",
                dict.dim(),
                self.dim
            )));
        }
        Ok(())
    }
}

pub fn predict(model: &TrainedModel, a: &Record, b: &Record, dict: &EmbeddingDictionary) -> Result<(f64, Label)> {
    let p = model.score(&model.compose(a, dict)?, &model.compose(b, dict)?)?;
    Ok((p, model.label(p)))
}

fn target(label: Label) -> f64 {
    if label.is_match() {
        1.0
    } else {
        0.0
    }
}

fn check_classes(labels: impl Iterator<Item = Label>) -> Result<()> {
    let (mut pos, mut neg) = (0usize, 0usize);
    for l in labels {
        if l.is_match() {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::Training(format!(
            "training data needs both classes, got {pos} matches and {neg} non-matches"
        )));
    }
    Ok(())
}

/// Trains only the dense head on precomputed similarity vectors.
pub fn train_head(features: &[Vec<f64>], labels: &[Label], cfg: &TrainConfig) -> Result<(DenseHead, TrainHistory)> {
    if features.len() != labels.len() {
        return Err(Error::Contract("features and labels differ in length".into()));
    }
    check_classes(labels.iter().copied())?;
    let input = features[0].len();
    if input == 0 || features.iter().any(|f| f.len() != input) {
        return Err(Error::Contract("feature vectors must share a positive length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let head = DenseHead::init(input, cfg.head_hidden, &mut rng);
    fit_head(head, features, labels, cfg, &mut rng)
}

fn fit_head(
    mut head: DenseHead,
    features: &[Vec<f64>],
    labels: &[Label],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(DenseHead, TrainHistory)> {
    let sizes: Vec<usize> = head.slices().iter().map(|s| s.len()).collect();
    let mut adam = Adam::new(cfg.learning_rate, &sizes);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grad = DenseHead::zeros(head.input, head.hidden);
            let mut loss = 0.0;
            let n = batch.len() as f64;
            for &i in batch {
                let cache = head.forward(&features[i]);
                let y = target(labels[i]);
                loss += bce_with_logit(cache.logit, y);
                head.backward(&cache, (sigmoid(cache.logit) - y) / n, &mut grad);
            }
            head.add_l2_grad(cfg.l2, &mut grad);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            adam.step(head.slices_mut().into(), grad.slices().into());
        }
        let loss = features
            .iter()
            .zip(labels)
            .map(|(f, l)| bce_with_logit(head.forward(f).logit, target(*l)))
            .sum::<f64>()
            / features.len() as f64
            + cfg.l2 * head.weight_norm_sq();
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, batch: order.len().div_ceil(cfg.batch_size) });
        }
        history.epoch_loss.push(loss);
    }
    Ok((head, history))
}

/// Token sequences of every record the pairs mention.
struct Tokens<'a> {
    left_tokens: HashMap<&'a str, Vec<TokenSeq>>,
    right_tokens: HashMap<&'a str, Vec<TokenSeq>>,
}

impl<'a> Tokens<'a> {
    fn new(left: &'a Table, right: &'a Table) -> Self {
        let tok = |t: &'a Table| t.records().iter().map(|r| (r.id.as_str(), tokenize_record(r))).collect();
        Self {
            left_tokens: tok(left),
            right_tokens: tok(right),
        }
    }

    fn pair(&self, p: &LabeledPair) -> (&[TokenSeq], &[TokenSeq]) {
        (&self.left_tokens[p.left_id.as_str()], &self.right_tokens[p.right_id.as_str()])
    }
}

/// Trains a matcher on labeled pairs. `right == None` means deduplication
/// within `left`.
pub fn train(
    pairs: &[LabeledPair],
    left: &Table,
    right: Option<&Table>,
    dict: &EmbeddingDictionary,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, TrainHistory)> {
    cfg.validate()?;
    validate_pairs(pairs, left, right)?;
    check_classes(pairs.iter().map(|p| p.label))?;
    let right = match right {
        Some(r) => {
            align_schemas(left, r)?;
            r
        }
        None => left,
    };
    let arity = left.schema().arity();
    let dim = dict.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let composer = match cfg.composition {
        Composition::Avg => Composer::Avg,
        Composition::Lstm => Composer::Lstm(LstmParams::init(dim, cfg.lstm_hidden, Direction::Forward, &mut rng)),
        Composition::Bilstm => {
            Composer::Lstm(LstmParams::init(dim, cfg.lstm_hidden, Direction::Bidirectional, &mut rng))
        }
    };
    let input = composer.feature_len(cfg.similarity, arity, dim)?;
    let head = DenseHead::init(input, cfg.head_hidden, &mut rng);
    let tokens = Tokens::new(left, right);
    let labels: Vec<Label> = pairs.iter().map(|p| p.label).collect();

    if composer == Composer::Avg && !cfg.fine_tune_embeddings {
        let features = pairs
            .iter()
            .map(|p| {
                let (a, b) = tokens.pair(p);
                let s = similarity(cfg.similarity, &compose_avg_tokens(a, dict), &compose_avg_tokens(b, dict))?;
                Ok(s.values)
            })
            .collect::<Result<Vec<_>>>()?;
        let (head, history) = fit_head(head, &features, &labels, cfg, &mut rng)?;
        let model = TrainedModel {
            config: cfg.clone(),
            composer,
            head,
            threshold: 0.5,
            overlay: BTreeMap::new(),
            dim,
            arity,
        };
        return Ok((model, history));
    }

    let mut model = TrainedModel {
        config: cfg.clone(),
        composer,
        head,
        threshold: 0.5,
        overlay: BTreeMap::new(),
        dim,
        arity,
    };
    let history = fit_full(&mut model, pairs, &tokens, dict, cfg, &mut rng)?;
    Ok((model, history))
}

fn add_into(acc: &mut BTreeMap<String, Vec<f64>>, token: String, g: &[f64]) {
    let slot = acc.entry(token).or_insert_with(|| vec![0.0; g.len()]);
    slot.iter_mut().zip(g).for_each(|(a, b)| *a += b);
}

/// Backpropagates `grad` on one DR into the composer gradient and, when
/// fine-tuning, the per-token embedding gradients.
fn compose_backward(
    composer: &Composer,
    attrs: &[TokenSeq],
    cache: Option<&LstmCache>,
    grad: &[f64],
    dim: usize,
    lstm_grad: Option<&mut LstmParams>,
    emb_grad: Option<&mut BTreeMap<String, Vec<f64>>>,
) -> Result<()> {
    match (composer, cache) {
        (Composer::Avg, _) => {
            if let Some(acc) = emb_grad {
                for (tok, g) in avg_backward(attrs, dim, grad) {
                    add_into(acc, tok, &g);
                }
            }
        }
        (Composer::Lstm(p), Some(cache)) => {
            let g = lstm_backward(p, cache, grad, emb_grad.is_some())?;
            if let Some(acc) = lstm_grad {
                acc.add_scaled(&g.params, 1.0);
            }
            if let (Some(acc), Some(inputs)) = (emb_grad, g.inputs) {
                for (tok, gx) in inputs {
                    if let Some(tok) = tok {
                        add_into(acc, tok, &gx);
                    }
                }
            }
        }
        (Composer::Lstm(_), None) => return Err(Error::Integrity("missing LSTM cache".into())),
    }
    Ok(())
}

fn fit_full(
    model: &mut TrainedModel,
    pairs: &[LabeledPair],
    tokens: &Tokens<'_>,
    dict: &EmbeddingDictionary,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainHistory> {
    let kind = cfg.similarity;
    let dim = model.dim;
    let head_sizes: Vec<usize> = model.head.slices().iter().map(|s| s.len()).collect();
    let mut head_adam = Adam::new(cfg.learning_rate, &head_sizes);
    let mut lstm_adam = match &model.composer {
        Composer::Lstm(p) => Some(Adam::new(
            cfg.learning_rate,
            &p.slices().iter().map(|s| s.len()).collect::<Vec<_>>(),
        )),
        Composer::Avg => None,
    };
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let n = batch.len() as f64;
            let mut head_grad = DenseHead::zeros(model.head.input, model.head.hidden);
            let mut lstm_grad = match &model.composer {
                Composer::Lstm(p) => Some(p.zeros_like()),
                Composer::Avg => None,
            };
            let mut emb_grad = cfg.fine_tune_embeddings.then(BTreeMap::new);
            let mut loss = 0.0;
            {
                let vectors = model.vectors(dict);
                for &i in batch {
                    let p = &pairs[i];
                    let (ta, tb) = tokens.pair(p);
                    let (da, ca) = model.composer.compose(ta, &vectors)?;
                    let (db, cb) = model.composer.compose(tb, &vectors)?;
                    let s = similarity(kind, &da, &db)?;
                    let cache = model.head.forward(&s.values);
                    let y = target(p.label);
                    loss += bce_with_logit(cache.logit, y);
                    let ds = model.head.backward(&cache, (sigmoid(cache.logit) - y) / n, &mut head_grad);
                    let (ga, gb) = similarity_backward(kind, &da, &db, &ds)?;
                    for (attrs, c, g) in [(ta, ca.as_ref(), &ga), (tb, cb.as_ref(), &gb)] {
                        compose_backward(
                            &model.composer,
                            attrs,
                            c,
                            g,
                            dim,
                            lstm_grad.as_mut(),
                            emb_grad.as_mut(),
                        )?;
                    }
                }
            }
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            model.head.add_l2_grad(cfg.l2, &mut head_grad);
            head_adam.step(model.head.slices_mut().into(), head_grad.slices().into());
            if let (Composer::Lstm(p), Some(g), Some(opt)) = (&mut model.composer, &lstm_grad, lstm_adam.as_mut()) {
                opt.step(p.slices_mut(), g.slices());
            }
            if let Some(grads) = emb_grad {
                for (tok, g) in grads {
                    // UNK and out-of-vocabulary tokens stay fixed
                    let Some(base) = dict.get(&tok) else { continue };
                    let v = model.overlay.entry(tok).or_insert_with(|| base.to_vec());
                    v.iter_mut().zip(&g).for_each(|(x, d)| *x -= cfg.embedding_update_rate * d);
                }
            }
        }
        let loss = full_loss(model, pairs, tokens, dict)? + cfg.l2 * model.head.weight_norm_sq();
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, batch: order.len().div_ceil(cfg.batch_size) });
        }
        history.epoch_loss.push(loss);
    }
    Ok(history)
}

fn full_loss(model: &TrainedModel, pairs: &[LabeledPair], tokens: &Tokens<'_>, dict: &EmbeddingDictionary) -> Result<f64> {
    let vectors = model.vectors(dict);
    let mut total = 0.0;
    for p in pairs {
        let (ta, tb) = tokens.pair(p);
        let da = model.composer.compose(ta, &vectors)?.0;
        let db = model.composer.compose(tb, &vectors)?.0;
        let s = similarity(model.config.similarity, &da, &db)?;
        total += bce_with_logit(model.head.forward(&s.values).logit, target(p.label));
    }
    Ok(total / pairs.len() as f64)
}
