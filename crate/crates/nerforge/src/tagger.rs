//! Generalized cross-entropy loss, a linear hashed-feature token tagger,
//! and span-level micro-F1.
//!
//! The loss is `(1 - p_t^q) / q` over the softmax probability of the true
//! class: cross-entropy as q -> 0, mean absolute error at q = 1, and less
//! sensitive to label noise in between. The tagger is deliberately small —
//! hashed indicator features and plain SGD — so the loss, the training
//! protocol (best-on-dev checkpointing with early stopping), and the
//! metric can all be exercised end to end in seconds.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{extract_mentions, Provenance, Sentence, Token, OUTSIDE};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("q must lie in (0, 1], got {0}")]
    InvalidQ(f64),
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("dev label {0:?} does not occur in the training data")]
    LabelMismatch(String),
    #[error("gold/pred corpora are misaligned: {0}")]
    Misaligned(String),
    #[error("training and dev corpora must be non-empty")]
    EmptyCorpus,
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
}

/// Loss hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GceParams {
    pub q: f64,
}

impl GceParams {
    pub fn new(q: f64) -> Result<Self, TrainError> {
        if q > 0.0 && q <= 1.0 {
            Ok(GceParams { q })
        } else {
            Err(TrainError::InvalidQ(q))
        }
    }
}

impl Default for GceParams {
    fn default() -> Self {
        GceParams { q: 0.5 }
    }
}

/// `(1 - probs[target]^q) / q`. A zero probability yields the finite
/// supremum `1/q` so numerical underflow cannot abort training.
pub fn gce_loss(probs: &[f64], target: usize, params: &GceParams) -> Result<f64, TrainError> {
    if target >= probs.len() {
        return Err(TrainError::InvalidDistribution(format!(
            "target {target} out of range for {} classes",
            probs.len()
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(TrainError::InvalidDistribution(format!(
            "probabilities sum to {sum}"
        )));
    }
    let p = probs[target];
    if p < 0.0 {
        return Err(TrainError::InvalidDistribution(format!(
            "negative probability {p}"
        )));
    }
    if params.q == 1.0 {
        return Ok(1.0 - p); // exact at q = 1
    }
    Ok((1.0 - p.powf(params.q)) / params.q)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Gradient of `gce_loss(softmax(logits), target)` with respect to the
/// logits. With p = softmax(logits) and t the target index the closed form
/// is `p_t^q * (p_i - [i == t])`: the chain rule gives
/// dL/dp_t = -p_t^(q-1) and dp_t/dz_i = p_t * ([i == t] - p_i), whose
/// product collapses to the expression above.
pub fn gce_grad_logits(logits: &[f64], target: usize, params: &GceParams) -> Vec<f64> {
    let p = softmax(logits);
    let scale = p[target].powf(params.q);
    p.iter()
        .enumerate()
        .map(|(i, &pi)| scale * (pi - f64::from(i == target)))
        .collect()
}

/// Plain softmax cross-entropy gradient, used for the noise-free baseline.
pub fn ce_grad_logits(logits: &[f64], target: usize) -> Vec<f64> {
    let p = softmax(logits);
    p.iter()
        .enumerate()
        .map(|(i, &pi)| pi - f64::from(i == target))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Gce(GceParams),
    Ce,
}

fn grad_for(loss: LossKind, logits: &[f64], target: usize) -> Vec<f64> {
    match loss {
        LossKind::Gce(params) => gce_grad_logits(logits, target, &params),
        LossKind::Ce => ce_grad_logits(logits, target),
    }
}

fn loss_for(loss: LossKind, probs: &[f64], target: usize) -> f64 {
    match loss {
        LossKind::Gce(params) => gce_loss(probs, target, &params).unwrap_or(f64::INFINITY),
        LossKind::Ce => -probs[target].max(1e-300).ln(),
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub loss: LossKind,
    pub seed: u64,
    pub feature_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 8,
            learning_rate: 0.1,
            patience: 5,
            loss: LossKind::Gce(GceParams::default()),
            seed: 0,
            feature_dim: 1 << 16,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn casing_shape(word: &str) -> String {
    word.chars()
        .take(12)
        .map(|c| {
            if c.is_uppercase() {
                'X'
            } else if c.is_lowercase() {
                'x'
            } else if c.is_ascii_digit() {
                'd'
            } else {
                c
            }
        })
        .collect()
}

fn char_prefix(word: &str, n: usize) -> String {
    word.chars().take(n).collect()
}

fn char_suffix(word: &str, n: usize) -> String {
    let chars: Vec<char> = word.chars().collect();
    chars[chars.len().saturating_sub(n)..].iter().collect()
}

/// Linear softmax token classifier over hashed indicator features of the
/// token window {-1, 0, +1}: lowercased form, casing shape, 3-char prefix
/// and suffix.
#[derive(Debug, Clone)]
pub struct ToyTagger {
    pub feature_dim: usize,
    pub labels: Vec<String>,
    /// `feature_dim * labels.len()`, row-major by feature index.
    pub weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    feature_dim: usize,
    labels: Vec<String>,
    weights: Vec<f64>,
}

impl ToyTagger {
    pub fn new(feature_dim: usize, labels: Vec<String>) -> Self {
        assert!(feature_dim.is_power_of_two(), "feature_dim must be 2^n");
        let weights = vec![0.0; feature_dim * labels.len()];
        ToyTagger {
            feature_dim,
            labels,
            weights,
        }
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Hashed feature indices for the token at `pos`.
    pub fn features(&self, tokens: &[String], pos: usize) -> Vec<usize> {
        let mask = self.feature_dim - 1;
        let mut out = Vec::with_capacity(12);
        for off in [-1i64, 0, 1] {
            let idx = pos as i64 + off;
            if idx < 0 {
                out.push(fnv1a(format!("{off}|BOS").as_bytes()) as usize & mask);
                continue;
            }
            let Some(word) = tokens.get(idx as usize) else {
                out.push(fnv1a(format!("{off}|EOS").as_bytes()) as usize & mask);
                continue;
            };
            let lower = word.to_lowercase();
            out.push(fnv1a(format!("{off}|w|{lower}").as_bytes()) as usize & mask);
            out.push(fnv1a(format!("{off}|sh|{}", casing_shape(word)).as_bytes()) as usize & mask);
            out.push(fnv1a(format!("{off}|p3|{}", char_prefix(&lower, 3)).as_bytes()) as usize & mask);
            out.push(fnv1a(format!("{off}|s3|{}", char_suffix(&lower, 3)).as_bytes()) as usize & mask);
        }
        out
    }

    pub fn logits(&self, features: &[usize]) -> Vec<f64> {
        let n = self.labels.len();
        let mut logits = vec![0.0; n];
        for &f in features {
            let base = f * n;
            for (l, logit) in logits.iter_mut().enumerate() {
                *logit += self.weights[base + l];
            }
        }
        logits
    }

    pub fn predict_labels(&self, tokens: &[String]) -> Vec<String> {
        (0..tokens.len())
            .map(|pos| {
                let logits = self.logits(&self.features(tokens, pos));
                let best = logits
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                self.labels[best].clone()
            })
            .collect()
    }

    /// Re-labels a corpus with this tagger's predictions.
    pub fn tag(&self, sentences: &[Sentence]) -> Vec<Sentence> {
        sentences
            .iter()
            .map(|s| {
                let texts = s.token_texts();
                let labels = self.predict_labels(&texts);
                Sentence {
                    id: s.id.clone(),
                    tokens: texts
                        .into_iter()
                        .zip(labels)
                        .map(|(t, l)| Token::new(t, l))
                        .collect(),
                    provenance: Provenance::Original,
                }
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        let ck = Checkpoint {
            version: 1,
            feature_dim: self.feature_dim,
            labels: self.labels.clone(),
            weights: self.weights.clone(),
        };
        std::fs::write(path, serde_json::to_string(&ck)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(ToyTagger {
            feature_dim: ck.feature_dim,
            labels: ck.labels,
            weights: ck.weights,
        })
    }
}

/// Result of one training run: the best-on-dev tagger plus the trajectory.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub tagger: ToyTagger,
    pub best_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Dev micro-F1 after each epoch.
    pub history: Vec<f64>,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Mini-batch SGD on per-token loss. After each epoch the dev set decides
/// whether the checkpoint improved; training stops once `patience` epochs
/// pass without improvement, keeping the best checkpoint.
pub fn train_toy_tagger(
    train: &[Sentence],
    dev: &[Sentence],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if train.is_empty() || dev.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut label_set: BTreeSet<String> = train
        .iter()
        .flat_map(|s| s.tokens.iter().map(|t| t.label.clone()))
        .collect();
    label_set.insert(OUTSIDE.to_string());
    for s in dev {
        for t in &s.tokens {
            if !label_set.contains(&t.label) {
                return Err(TrainError::LabelMismatch(t.label.clone()));
            }
        }
    }
    let labels: Vec<String> = label_set.into_iter().collect();
    let mut tagger = ToyTagger::new(cfg.feature_dim, labels);
    let n_labels = tagger.labels.len();

    let token_texts: Vec<Vec<String>> = train.iter().map(Sentence::token_texts).collect();
    let targets: Vec<Vec<usize>> = train
        .iter()
        .map(|s| {
            s.tokens
                .iter()
                .map(|t| tagger.label_index(&t.label).expect("label in set"))
                .collect()
        })
        .collect();
    let mut instances: Vec<(usize, usize)> = (0..train.len())
        .flat_map(|si| (0..train[si].tokens.len()).map(move |ti| (si, ti)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best_weights = tagger.weights.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut epochs_without_improvement = 0usize;
    let mut history = Vec::new();
    let mut loss_history = Vec::new();
    let mut epochs_run = 0usize;

    for epoch in 0..cfg.epochs {
        epochs_run = epoch + 1;
        instances.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in instances.chunks(cfg.batch_size.max(1)) {
            let scale = cfg.learning_rate / batch.len() as f64;
            // accumulate sparse updates per batch, then apply
            let mut updates: Vec<(usize, Vec<f64>)> = Vec::with_capacity(batch.len());
            for &(si, ti) in batch {
                let feats = tagger.features(&token_texts[si], ti);
                let logits = tagger.logits(&feats);
                let grad = grad_for(cfg.loss, &logits, targets[si][ti]);
                epoch_loss += loss_for(cfg.loss, &softmax(&logits), targets[si][ti]);
                for &f in &feats {
                    updates.push((f, grad.clone()));
                }
            }
            for (f, grad) in updates {
                let base = f * n_labels;
                for (l, g) in grad.iter().enumerate() {
                    tagger.weights[base + l] -= scale * g;
                }
            }
        }
        loss_history.push(epoch_loss / instances.len() as f64);

        let pred = tagger.tag(dev);
        let f1 = micro_f1(dev, &pred)?.f1;
        history.push(f1);
        log::info!("epoch {epoch}: dev micro-F1 {f1:.4}");

        if f1 > best_f1 {
            best_f1 = f1;
            best_epoch = epoch;
            best_weights.copy_from_slice(&tagger.weights);
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
            if epochs_without_improvement > cfg.patience {
                break;
            }
        }
    }

    tagger.weights = best_weights;
    Ok(TrainOutcome {
        tagger,
        best_f1,
        best_epoch,
        epochs_run,
        history,
        loss_history,
    })
}

/// Span-level scores: a predicted mention counts iff its (start, end, type)
/// triple matches a gold mention exactly, micro-averaged over the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

pub fn micro_f1(gold: &[Sentence], pred: &[Sentence]) -> Result<MicroF1, TrainError> {
    if gold.len() != pred.len() {
        return Err(TrainError::Misaligned(format!(
            "{} gold vs {} predicted sentences",
            gold.len(),
            pred.len()
        )));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (g, p) in gold.iter().zip(pred) {
        if g.tokens.len() != p.tokens.len() {
            return Err(TrainError::Misaligned(format!(
                "sentence {}: {} gold tokens vs {} predicted",
                g.id,
                g.tokens.len(),
                p.tokens.len()
            )));
        }
        let gold_spans: BTreeSet<(usize, usize, String)> = extract_mentions(g)
            .into_iter()
            .map(|m| (m.start, m.end, m.entity_type))
            .collect();
        let pred_spans: BTreeSet<(usize, usize, String)> = extract_mentions(p)
            .into_iter()
            .map(|m| (m.start, m.end, m.entity_type))
            .collect();
        tp += gold_spans.intersection(&pred_spans).count();
        fp += pred_spans.difference(&gold_spans).count();
        fn_ += gold_spans.difference(&pred_spans).count();
    }
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MicroF1 {
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
    })
}
