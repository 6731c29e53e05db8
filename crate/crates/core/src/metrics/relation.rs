//! The relation index: rectified excess probability of the tail token
//! among unique prefix tokens, gated on heads that attend to the head
//! token, averaged per head over triplets and current positions.

use rayon::prelude::*;

use super::{AnalysisConfig, AttentionSource, HeadOccurrenceTable, HeadProjections, RelationIndexTable, TauHistogram};
use crate::circuits::circuit_attention_scaled;
use crate::corpus::{AnnotatedSentence, Relation, Triplet};
use crate::error::{Error, Result};
use crate::model::{forward, ModelWeights};
use crate::tensor::{argmax_with_runnerup, TensorF32};

/// Does this attention row "attend to" position `s` exclusively?
///
/// `a_row` is the causal prefix (positions `0..=j`). With `tau` given, `s`
/// must be the argmax and its mass must exceed the runner-up by more than
/// `tau`; without it only the argmax condition applies. A single-position
/// row passes iff `s == 0`.
pub fn attends_to_head(a_row: &[f32], s: usize, tau: Option<f64>) -> Result<bool> {
    if s >= a_row.len() {
        return Err(Error::Input(format!(
            "head position {s} beyond current position {}",
            a_row.len().saturating_sub(1)
        )));
    }
    let (argmax, value, runnerup) = argmax_with_runnerup(a_row, a_row.len() - 1)?;
    if argmax != s {
        return Ok(false);
    }
    match (tau, runnerup) {
        (None, _) => Ok(true),
        (Some(_), None) => Ok(true), // j == 0, s == 0
        (Some(t), Some(r)) => Ok(f64::from(value) / f64::from(r) > t),
    }
}

/// Excess below this is treated as zero so that an exactly uniform
/// distribution stays undefined despite f64 summation rounding (the mean
/// of n equal probabilities is not bitwise equal to them for most n).
const RECTIFY_EPS: f64 = 1e-12;

/// Rectified-excess share of the tail token (Eq. 2-3 of the relation
/// index): `q_k = max(0, p_k - mean(p))`, `a = q_tail / sum(q)`.
/// `None` when every token sits at or below the mean.
pub fn relation_score(p: &[f64], tail_index: usize) -> Result<Option<f64>> {
    if tail_index >= p.len() {
        return Err(Error::Input(format!(
            "tail index {tail_index} out of range for {} probabilities",
            p.len()
        )));
    }
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    let mut q_sum = 0.0;
    let mut q_tail = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        let exc = pi - mean;
        let q = if exc > RECTIFY_EPS { exc } else { 0.0 };
        q_sum += q;
        if i == tail_index {
            q_tail = q;
        }
    }
    if q_sum == 0.0 {
        return Ok(None);
    }
    Ok(Some(q_tail / q_sum))
}

/// One scored (head, current-position) combination, kept for inspection.
#[derive(Debug, Clone)]
pub struct TokenProbRecord {
    pub layer: usize,
    pub head: usize,
    pub j: usize,
    /// Probability per unique context token.
    pub p: Vec<f64>,
    /// Rectified excess per unique context token.
    pub q: Vec<f64>,
    /// Relation score; absent when all excess vanishes.
    pub a: Option<f64>,
}

/// As `relation_score`, returning the full record.
pub fn relation_score_record(
    layer: usize,
    head: usize,
    j: usize,
    p: Vec<f64>,
    tail_index: usize,
) -> Result<TokenProbRecord> {
    let a = relation_score(&p, tail_index)?;
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    let q = p
        .iter()
        .map(|&pi| {
            let exc = pi - mean;
            if exc > RECTIFY_EPS {
                exc
            } else {
                0.0
            }
        })
        .collect();
    Ok(TokenProbRecord {
        layer,
        head,
        j,
        p,
        q,
        a,
    })
}

// ---------------------------------------------------------------------------
// table pipelines
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum TableMode {
    Relation { relation: Relation, reversed: bool },
    Baseline,
}

/// Average relation index per head over all triplets of `relation` and all
/// current positions `j >= max(s, o)`.
pub fn relation_index_table(
    weights: &ModelWeights,
    corpus: &[AnnotatedSentence],
    relation: Relation,
    config: &AnalysisConfig,
) -> Result<RelationIndexTable> {
    build_table(
        weights,
        corpus,
        config,
        TableMode::Relation {
            relation,
            reversed: false,
        },
    )
}

/// Identical pipeline on the reverse triplets (head and tail swapped).
pub fn reverse_table(
    weights: &ModelWeights,
    corpus: &[AnnotatedSentence],
    relation: Relation,
    config: &AnalysisConfig,
) -> Result<RelationIndexTable> {
    build_table(
        weights,
        corpus,
        config,
        TableMode::Relation {
            relation,
            reversed: true,
        },
    )
}

/// Control table: the tail of every triplet is forced to a fixed early
/// position (`config.baseline_pos`), which represents no relationship.
pub fn baseline_table(
    weights: &ModelWeights,
    corpus: &[AnnotatedSentence],
    config: &AnalysisConfig,
) -> Result<RelationIndexTable> {
    build_table(weights, corpus, config, TableMode::Baseline)
}

fn build_table(
    weights: &ModelWeights,
    corpus: &[AnnotatedSentence],
    config: &AnalysisConfig,
    mode: TableMode,
) -> Result<RelationIndexTable> {
    config.validate()?;
    let cfg = &weights.config;
    let label = match mode {
        TableMode::Relation { relation, .. } => relation.label().to_string(),
        TableMode::Baseline => "baseline".to_string(),
    };
    let reversed = matches!(mode, TableMode::Relation { reversed: true, .. });
    let work: Vec<(&AnnotatedSentence, Vec<Triplet>)> = corpus
        .iter()
        .filter_map(|s| {
            let t = select_triplets(s, mode, config);
            (!t.is_empty()).then_some((s, t))
        })
        .collect();
    if work.is_empty() {
        return Err(Error::Empty(format!(
            "no usable triplets for table {label:?}"
        )));
    }
    let proj = HeadProjections::build(weights)?;

    let partials: Vec<Result<RelationIndexTable>> = work
        .par_iter()
        .map(|(sent, triplets)| {
            let mut table =
                RelationIndexTable::new(label.clone(), reversed, cfg.n_layers, cfg.n_heads);
            let mut eval = SentenceEval::new(weights, &proj, sent, config)?;
            for t in triplets {
                for j in t.s.max(t.o)..sent.len() {
                    for l in 0..cfg.n_layers {
                        for h in 0..cfg.n_heads {
                            if let Some(score) = eval.score(l, h, j, t.s, t.o, config)? {
                                table.push(l, h, score);
                            }
                        }
                    }
                }
            }
            Ok(table)
        })
        .collect();

    let mut table = RelationIndexTable::new(label, reversed, cfg.n_layers, cfg.n_heads);
    for p in partials {
        table.merge(&p?);
    }
    Ok(table)
}

/// Per triplet, the head with the largest positive mean relation index
/// over current positions gets one occurrence count.
pub fn head_grouping(
    weights: &ModelWeights,
    corpus: &[AnnotatedSentence],
    relation: Relation,
    config: &AnalysisConfig,
) -> Result<HeadOccurrenceTable> {
    config.validate()?;
    let cfg = &weights.config;
    let mode = TableMode::Relation {
        relation,
        reversed: false,
    };
    let work: Vec<(&AnnotatedSentence, Vec<Triplet>)> = corpus
        .iter()
        .filter_map(|s| {
            let t = select_triplets(s, mode, config);
            (!t.is_empty()).then_some((s, t))
        })
        .collect();
    if work.is_empty() {
        return Err(Error::Empty(format!(
            "no usable triplets for grouping {relation}"
        )));
    }
    let proj = HeadProjections::build(weights)?;

    let partials: Vec<Result<HeadOccurrenceTable>> = work
        .par_iter()
        .map(|(sent, triplets)| {
            let mut table = HeadOccurrenceTable::new(
                relation.label().to_string(),
                false,
                cfg.n_layers,
                cfg.n_heads,
            );
            let mut eval = SentenceEval::new(weights, &proj, sent, config)?;
            for t in triplets {
                let mut sums = vec![0.0f64; cfg.n_layers * cfg.n_heads];
                let mut counts = vec![0u64; cfg.n_layers * cfg.n_heads];
                for j in t.s.max(t.o)..sent.len() {
                    for l in 0..cfg.n_layers {
                        for h in 0..cfg.n_heads {
                            if let Some(score) = eval.score(l, h, j, t.s, t.o, config)? {
                                sums[l * cfg.n_heads + h] += score;
                                counts[l * cfg.n_heads + h] += 1;
                            }
                        }
                    }
                }
                // largest strictly positive mean wins; ties toward the
                // smallest (layer, head)
                let mut best: Option<(usize, f64)> = None;
                for i in 0..sums.len() {
                    if counts[i] == 0 {
                        continue;
                    }
                    let mean = sums[i] / counts[i] as f64;
                    if mean > 0.0 && best.map_or(true, |(_, b)| mean > b) {
                        best = Some((i, mean));
                    }
                }
                if let Some((i, _)) = best {
                    table.increment(i / cfg.n_heads, i % cfg.n_heads);
                }
            }
            Ok(table)
        })
        .collect();

    let mut table =
        HeadOccurrenceTable::new(relation.label().to_string(), false, cfg.n_layers, cfg.n_heads);
    for p in partials {
        let p = p?;
        for l in 0..cfg.n_layers {
            for h in 0..cfg.n_heads {
                for _ in 0..p.count(l, h) {
                    table.increment(l, h);
                }
            }
        }
    }
    Ok(table)
}

/// Distribution of the attention ratio `A[j][s] / runner-up` over all
/// heads and positions where `s` is the prefix argmax.
pub fn tau_ratio_distribution(
    weights: &ModelWeights,
    corpus: &[AnnotatedSentence],
    config: &AnalysisConfig,
) -> Result<TauHistogram> {
    let cfg = &weights.config;
    let work: Vec<&AnnotatedSentence> = corpus.iter().filter(|s| !s.triplets.is_empty()).collect();
    if work.is_empty() {
        return Err(Error::Empty("no triplets for ratio distribution".into()));
    }
    let proj = HeadProjections::build(weights)?;
    let partials: Vec<Result<TauHistogram>> = work
        .par_iter()
        .map(|sent| {
            let eval = SentenceEval::new(weights, &proj, sent, config)?;
            let mut hist = TauHistogram::new();
            for t in &sent.triplets {
                for j in t.s.max(t.o)..sent.len() {
                    for l in 0..cfg.n_layers {
                        for h in 0..cfg.n_heads {
                            let row = eval.attention_row(l, h, j);
                            let (argmax, value, runnerup) = argmax_with_runnerup(row, j)?;
                            if argmax != t.s {
                                continue;
                            }
                            match runnerup {
                                Some(r) => {
                                    hist.push(f64::from(value) / f64::from(r));
                                }
                                None => hist.push(f64::INFINITY),
                            }
                        }
                    }
                }
            }
            Ok(hist)
        })
        .collect();
    let mut hist = TauHistogram::new();
    for p in partials {
        hist.merge(&p?);
    }
    Ok(hist)
}

fn select_triplets(
    sent: &AnnotatedSentence,
    mode: TableMode,
    config: &AnalysisConfig,
) -> Vec<Triplet> {
    match mode {
        TableMode::Relation { relation, reversed } => sent
            .triplets
            .iter()
            .filter(|t| t.relation == relation)
            .map(|t| if reversed { t.reverse() } else { *t })
            .collect(),
        TableMode::Baseline => {
            // the forced tail must exist and differ from every head position
            if sent.len() <= config.baseline_pos + 1 {
                return Vec::new();
            }
            sent.triplets
                .iter()
                .filter(|t| t.s != config.baseline_pos)
                .map(|t| Triplet {
                    o: config.baseline_pos,
                    ..*t
                })
                .collect()
        }
    }
}

// ---------------------------------------------------------------------------
// per-sentence evaluation with (head, j) caching
// ---------------------------------------------------------------------------

enum Attention {
    Capture(crate::model::AttentionRecord),
    Circuit(Vec<TensorF32>),
}

pub(crate) struct SentenceEval<'a> {
    proj: &'a HeadProjections,
    tokens: &'a [u32],
    /// embedding-plus-position rows, optionally RMS-normalized
    x: Vec<Vec<f32>>,
    attn: Attention,
    /// unique token ids of positions 0..=j, first-occurrence order
    uniq: Vec<Vec<u32>>,
    /// lazily computed p vectors per (layer*H + head, j)
    p_cache: Vec<Option<Vec<f64>>>,
    n_heads: usize,
}

impl<'a> SentenceEval<'a> {
    pub fn new(
        weights: &ModelWeights,
        proj: &'a HeadProjections,
        sent: &'a AnnotatedSentence,
        config: &AnalysisConfig,
    ) -> Result<Self> {
        let n = sent.len();
        let mut x = Vec::with_capacity(n);
        for (pos, &t) in sent.tokens.iter().enumerate() {
            let mut row = weights.embed_at(t, pos)?;
            if config.normalize_embeddings {
                let ms = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>()
                    / row.len() as f64;
                let inv = (1.0 / (ms + 1e-12).sqrt()) as f32;
                row.iter_mut().for_each(|v| *v *= inv);
            }
            x.push(row);
        }
        let attn = match config.attention_source {
            AttentionSource::ForwardCapture => {
                let (_, rec) = forward(weights, &sent.tokens, true)?;
                Attention::Capture(rec.expect("capture requested"))
            }
            AttentionSource::Circuit => {
                let d = weights.config.d_model;
                let flat: Vec<f32> = x.iter().flatten().copied().collect();
                let xt = TensorF32::new(vec![n, d], flat)?;
                let mut mats = Vec::with_capacity(proj.n_layers * proj.n_heads);
                for l in 0..proj.n_layers {
                    for h in 0..proj.n_heads {
                        mats.push(circuit_attention_scaled(
                            &xt,
                            proj.circuit_of(l, h),
                            config.qk_scale,
                        )?);
                    }
                }
                Attention::Circuit(mats)
            }
        };
        let mut uniq: Vec<Vec<u32>> = Vec::with_capacity(n);
        let mut seen: Vec<u32> = Vec::new();
        for &t in &sent.tokens {
            if !seen.contains(&t) {
                seen.push(t);
            }
            uniq.push(seen.clone());
        }
        Ok(Self {
            proj,
            tokens: &sent.tokens,
            x,
            attn,
            uniq,
            p_cache: vec![None; proj.n_layers * proj.n_heads * n],
            n_heads: proj.n_heads,
        })
    }

    pub fn attention_row(&self, layer: usize, head: usize, j: usize) -> &[f32] {
        let m = match &self.attn {
            Attention::Capture(rec) => rec.head(layer, head),
            Attention::Circuit(mats) => &mats[layer * self.n_heads + head],
        };
        &m.row(j)[..=j]
    }

    /// Relation score of (layer, head) at current position j for triplet
    /// positions (s, o); `None` when the gate rejects or the score is
    /// undefined (unless undefined counts as zero).
    pub fn score(
        &mut self,
        layer: usize,
        head: usize,
        j: usize,
        s: usize,
        o: usize,
        config: &AnalysisConfig,
    ) -> Result<Option<f64>> {
        let row = self.attention_row(layer, head, j);
        let tau = config.require_tau_gate.then_some(config.tau);
        if !attends_to_head(row, s, tau)? {
            return Ok(None);
        }
        let tail_token = self.tokens[o];
        let tail_index = self.uniq[j]
            .iter()
            .position(|&t| t == tail_token)
            .expect("tail position precedes j");
        let p = self.probs(layer, head, j, config);
        match relation_score(p, tail_index)? {
            Some(a) => Ok(Some(a)),
            None if config.undefined_as_zero => Ok(Some(0.0)),
            None => Ok(None),
        }
    }

    fn probs(&mut self, layer: usize, head: usize, j: usize, config: &AnalysisConfig) -> &Vec<f64> {
        let n = self.tokens.len();
        let slot = (layer * self.n_heads + head) * n + j;
        if self.p_cache[slot].is_none() {
            let ovu = self.proj.ovu_of(layer, head);
            let v = self.proj.vocab;
            let x_j = &self.x[j];
            let uniq = &self.uniq[j];
            let p = if config.fullvocab_softmax {
                // full-vocabulary softmax, then extract the unique prefix
                // tokens (does not renormalize)
                let mut logits = vec![0.0f64; v];
                for (pdim, &xv) in x_j.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let xv = f64::from(xv);
                    let row = &ovu[pdim * v..(pdim + 1) * v];
                    for (acc, &w) in logits.iter_mut().zip(row) {
                        *acc += xv * w;
                    }
                }
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
                uniq.iter()
                    .map(|&t| (logits[t as usize] - max).exp() / z)
                    .collect()
            } else {
                // softmax restricted to the unique prefix tokens
                let logits: Vec<f64> = uniq
                    .iter()
                    .map(|&t| {
                        let mut acc = 0.0f64;
                        for (pdim, &xv) in x_j.iter().enumerate() {
                            if xv == 0.0 {
                                continue;
                            }
                            acc += f64::from(xv) * ovu[pdim * v + t as usize];
                        }
                        acc
                    })
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
                logits.iter().map(|&l| (l - max).exp() / z).collect()
            };
            self.p_cache[slot] = Some(p);
        }
        self.p_cache[slot].as_ref().unwrap()
    }
}
