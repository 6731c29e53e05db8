//! Attention-and-words probing classifier: predicts each dependent
//! token's syntactic head position from the model's attention weights
//! (both directions) plus an embedding dot-product term.

use std::path::Path;

use rayon::prelude::*;

use crate::corpus::AnnotatedSentence;
use crate::error::{Error, Result};
use crate::model::{container, forward, ModelWeights};
use crate::tensor::TensorF32;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    pub n_layers: usize,
    pub n_heads: usize,
    /// weight per (layer, head) on A[dependent, candidate]
    pub fwd_weights: Vec<f32>,
    /// weight per (layer, head) on A[candidate, dependent]
    pub rev_weights: Vec<f32>,
    pub emb_weight: f32,
    pub bias: f32,
}

impl ProbeModel {
    pub fn zeros(n_layers: usize, n_heads: usize) -> Self {
        Self {
            n_layers,
            n_heads,
            fwd_weights: vec![0.0; n_layers * n_heads],
            rev_weights: vec![0.0; n_layers * n_heads],
            emb_weight: 0.0,
            bias: 0.0,
        }
    }

    pub fn feature_count(&self) -> usize {
        2 * self.n_layers * self.n_heads + 2
    }

    fn score(&self, features: &[f64]) -> f64 {
        let lh = self.n_layers * self.n_heads;
        let mut s = 0.0;
        for (w, f) in self.fwd_weights.iter().zip(&features[..lh]) {
            s += f64::from(*w) * f;
        }
        for (w, f) in self.rev_weights.iter().zip(&features[lh..2 * lh]) {
            s += f64::from(*w) * f;
        }
        s + f64::from(self.emb_weight) * features[2 * lh] + f64::from(self.bias)
    }
}

/// One dependent token with per-candidate features and the gold head.
struct ProbeExample {
    /// candidate-major: features[cand][feature]
    features: Vec<Vec<f64>>,
    gold: usize,
}

/// Tokens governed by exactly one triplet become (dependent, head)
/// training pairs; candidates are all other positions in the sentence.
fn probe_examples(weights: &ModelWeights, sentences: &[AnnotatedSentence]) -> Result<Vec<ProbeExample>> {
    let cfg = &weights.config;
    let lh = cfg.n_layers * cfg.n_heads;
    let per_sentence: Vec<Result<Vec<ProbeExample>>> = sentences
        .par_iter()
        .map(|sent| {
            let n = sent.len();
            let mut out = Vec::new();
            if n < 2 {
                return Ok(out);
            }
            let (_, rec) = forward(weights, &sent.tokens, true)?;
            let rec = rec.expect("capture requested");
            let emb: Vec<Vec<f32>> = sent
                .tokens
                .iter()
                .enumerate()
                .map(|(p, &t)| weights.embed_at(t, p))
                .collect::<Result<_>>()?;
            for c in 0..n {
                let heads: Vec<usize> = sent
                    .triplets
                    .iter()
                    .filter(|t| t.o == c)
                    .map(|t| t.s)
                    .collect();
                if heads.len() != 1 {
                    continue;
                }
                let gold_pos = heads[0];
                let candidates: Vec<usize> = (0..n).filter(|&p| p != c).collect();
                let gold = candidates
                    .iter()
                    .position(|&p| p == gold_pos)
                    .expect("gold head is a valid position");
                let features = candidates
                    .iter()
                    .map(|&p| {
                        let mut f = Vec::with_capacity(2 * lh + 2);
                        for l in 0..cfg.n_layers {
                            for h in 0..cfg.n_heads {
                                f.push(f64::from(rec.head(l, h).at(c, p)));
                            }
                        }
                        for l in 0..cfg.n_layers {
                            for h in 0..cfg.n_heads {
                                f.push(f64::from(rec.head(l, h).at(p, c)));
                            }
                        }
                        let dot: f64 = emb[c]
                            .iter()
                            .zip(&emb[p])
                            .map(|(a, b)| f64::from(*a) * f64::from(*b))
                            .sum();
                        // normalized by width so the term stays O(1)
                        f.push(dot / cfg.d_model as f64);
                        f.push(1.0);
                        f
                    })
                    .collect();
                out.push(ProbeExample { features, gold });
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for s in per_sentence {
        all.extend(s?);
    }
    Ok(all)
}

/// Full-batch gradient descent on softmax cross-entropy over candidate
/// positions. Deterministic: zero init, fixed iteration order.
pub fn train_probe(
    weights: &ModelWeights,
    sentences: &[AnnotatedSentence],
    epochs: usize,
    lr: f64,
) -> Result<ProbeModel> {
    let examples = probe_examples(weights, sentences)?;
    if examples.is_empty() {
        return Err(Error::Empty("no trainable (dependent, head) pairs".into()));
    }
    let cfg = &weights.config;
    let mut probe = ProbeModel::zeros(cfg.n_layers, cfg.n_heads);
    let dim = probe.feature_count();
    let inv_n = 1.0 / examples.len() as f64;

    for _ in 0..epochs {
        let mut grad = vec![0.0f64; dim];
        for ex in &examples {
            let scores: Vec<f64> = ex.features.iter().map(|f| probe.score(f)).collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            for (ci, f) in ex.features.iter().enumerate() {
                let p = (scores[ci] - max).exp() / z;
                let coef = (p - if ci == ex.gold { 1.0 } else { 0.0 }) * inv_n;
                for (g, x) in grad.iter_mut().zip(f) {
                    *g += coef * x;
                }
            }
        }
        let lh = probe.n_layers * probe.n_heads;
        for (w, g) in probe.fwd_weights.iter_mut().zip(&grad[..lh]) {
            *w -= (lr * g) as f32;
        }
        for (w, g) in probe.rev_weights.iter_mut().zip(&grad[lh..2 * lh]) {
            *w -= (lr * g) as f32;
        }
        probe.emb_weight -= (lr * grad[2 * lh]) as f32;
        probe.bias -= (lr * grad[2 * lh + 1]) as f32;
    }
    Ok(probe)
}

/// Mean cross-entropy of the probe on a sentence set (training diagnostic).
pub fn probe_loss(
    probe: &ProbeModel,
    weights: &ModelWeights,
    sentences: &[AnnotatedSentence],
) -> Result<f64> {
    let examples = probe_examples(weights, sentences)?;
    if examples.is_empty() {
        return Err(Error::Empty("no probe examples".into()));
    }
    let mut acc = 0.0;
    for ex in &examples {
        let scores: Vec<f64> = ex.features.iter().map(|f| probe.score(f)).collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        acc += max + z.ln() - scores[ex.gold];
    }
    Ok(acc / examples.len() as f64)
}

/// Fraction of dependent tokens whose argmax candidate is the gold head.
pub fn eval_probe(
    probe: &ProbeModel,
    weights: &ModelWeights,
    sentences: &[AnnotatedSentence],
) -> Result<f64> {
    let examples = probe_examples(weights, sentences)?;
    if examples.is_empty() {
        return Err(Error::Empty("no probe examples to evaluate".into()));
    }
    let correct = examples
        .iter()
        .filter(|ex| {
            let mut best = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for (ci, f) in ex.features.iter().enumerate() {
                let s = probe.score(f);
                if s > best_score {
                    best_score = s;
                    best = ci;
                }
            }
            best == ex.gold
        })
        .count();
    Ok(correct as f64 / examples.len() as f64)
}

/// Expected accuracy of uniform guessing on this evaluation set: mean of
/// 1/(candidate count) over dependent tokens.
pub fn chance_rate(sentences: &[AnnotatedSentence]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for sent in sentences {
        for c in 0..sent.len() {
            let heads = sent.triplets.iter().filter(|t| t.o == c).count();
            if heads == 1 && sent.len() > 1 {
                sum += 1.0 / (sent.len() - 1) as f64;
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn save_probe(probe: &ProbeModel, path: &Path) -> Result<()> {
    let lh = probe.n_layers * probe.n_heads;
    container::write_container(
        path,
        &container::Container {
            kind: "probe".into(),
            meta: serde_json::json!({
                "n_layers": probe.n_layers,
                "n_heads": probe.n_heads,
            }),
            tensors: vec![
                (
                    "fwd_weights".into(),
                    TensorF32::new(vec![lh], probe.fwd_weights.clone())?,
                ),
                (
                    "rev_weights".into(),
                    TensorF32::new(vec![lh], probe.rev_weights.clone())?,
                ),
                (
                    "scalars".into(),
                    TensorF32::new(vec![2], vec![probe.emb_weight, probe.bias])?,
                ),
            ],
        },
    )
}

pub fn load_probe(path: &Path) -> Result<ProbeModel> {
    let c = container::read_container(path)?;
    if c.kind != "probe" {
        return Err(Error::Corruption(format!(
            "expected probe container, found {:?}",
            c.kind
        )));
    }
    let n_layers = c.meta["n_layers"]
        .as_u64()
        .ok_or_else(|| Error::Corruption("missing n_layers".into()))? as usize;
    let n_heads = c.meta["n_heads"]
        .as_u64()
        .ok_or_else(|| Error::Corruption("missing n_heads".into()))? as usize;
    let mut probe = ProbeModel::zeros(n_layers, n_heads);
    for (name, t) in c.tensors {
        match name.as_str() {
            "fwd_weights" => probe.fwd_weights = t.into_data(),
            "rev_weights" => probe.rev_weights = t.into_data(),
            "scalars" => {
                let d = t.data();
                probe.emb_weight = d[0];
                probe.bias = d[1];
            }
            other => {
                return Err(Error::Corruption(format!("unknown tensor {other:?}")));
            }
        }
    }
    if probe.fwd_weights.len() != n_layers * n_heads
        || probe.rev_weights.len() != n_layers * n_heads
    {
        return Err(Error::Corruption("probe tensor sizes disagree with meta".into()));
    }
    Ok(probe)
}
