//! Plain induction-head diagnostics: prefix matching on doubled random
//! sequences and the copying behavior of the OV circuit.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use super::relation::relation_score;
use crate::circuits::build_circuits;
use crate::error::{Error, Result};
use crate::model::{forward, ModelWeights};

/// Mean attention mass the head places on the induction target (the token
/// right after the previous occurrence of the current token) over doubled
/// random sequences.
pub fn prefix_matching_score(
    weights: &ModelWeights,
    layer: usize,
    head: usize,
    n_seqs: usize,
    seq_len: usize,
    seed: u64,
) -> Result<f64> {
    let cfg = &weights.config;
    weights.head(layer, head)?;
    if seq_len < 2 || n_seqs == 0 {
        return Err(Error::Input("need seq_len >= 2 and n_seqs >= 1".into()));
    }
    if 2 * seq_len > cfg.max_seq_len {
        return Err(Error::Input(format!(
            "doubled length {} exceeds max_seq_len {}",
            2 * seq_len,
            cfg.max_seq_len
        )));
    }
    if seq_len > cfg.vocab_size {
        return Err(Error::Input(format!(
            "seq_len {seq_len} needs {seq_len} distinct tokens but vocab has {}",
            cfg.vocab_size
        )));
    }

    let sums: Vec<Result<f64>> = (0..n_seqs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(0x5046_0000 ^ i as u64);
            let mut pool: Vec<u32> = (0..cfg.vocab_size as u32).collect();
            pool.shuffle(&mut rng);
            let mut seq = pool[..seq_len].to_vec();
            seq.extend_from_within(..seq_len);
            let (_, rec) = forward(weights, &seq, true)?;
            let a = rec.expect("capture requested");
            let mat = a.head(layer, head);
            let mut acc = 0.0f64;
            for j in seq_len..2 * seq_len {
                let target = j - seq_len + 1;
                acc += f64::from(mat.at(j, target));
            }
            Ok(acc / seq_len as f64)
        })
        .collect();

    let mut total = 0.0;
    for s in sums {
        total += s?;
    }
    Ok(total / n_seqs as f64)
}

/// Prefix-matching scores for every head at once, sharing one captured
/// forward pass per sequence.
pub fn prefix_matching_table(
    weights: &ModelWeights,
    n_seqs: usize,
    seq_len: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let cfg = &weights.config;
    if seq_len < 2 || n_seqs == 0 {
        return Err(Error::Input("need seq_len >= 2 and n_seqs >= 1".into()));
    }
    if 2 * seq_len > cfg.max_seq_len || seq_len > cfg.vocab_size {
        return Err(Error::Input(format!(
            "doubled length {} needs max_seq_len >= {} and vocab >= {seq_len}",
            2 * seq_len,
            2 * seq_len
        )));
    }
    let n_cells = cfg.n_layers * cfg.n_heads;
    let per_seq: Vec<Result<Vec<f64>>> = (0..n_seqs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(0x5046_0000 ^ i as u64);
            let mut pool: Vec<u32> = (0..cfg.vocab_size as u32).collect();
            pool.shuffle(&mut rng);
            let mut seq = pool[..seq_len].to_vec();
            seq.extend_from_within(..seq_len);
            let (_, rec) = forward(weights, &seq, true)?;
            let rec = rec.expect("capture requested");
            let mut sums = vec![0.0f64; n_cells];
            for l in 0..cfg.n_layers {
                for h in 0..cfg.n_heads {
                    let mat = rec.head(l, h);
                    let mut acc = 0.0f64;
                    for j in seq_len..2 * seq_len {
                        acc += f64::from(mat.at(j, j - seq_len + 1));
                    }
                    sums[l * cfg.n_heads + h] = acc / seq_len as f64;
                }
            }
            Ok(sums)
        })
        .collect();
    let mut totals = vec![0.0f64; n_cells];
    for s in per_seq {
        for (t, v) in totals.iter_mut().zip(s?) {
            *t += v;
        }
    }
    totals.iter_mut().for_each(|t| *t /= n_seqs as f64);
    Ok(totals)
}

#[derive(Debug, Clone, Copy)]
pub struct CopyingScore {
    /// Mean over defined samples; absent when every sample was undefined
    /// (e.g. a zero OV circuit).
    pub mean: Option<f64>,
    pub defined: usize,
    pub total: usize,
}

impl CopyingScore {
    /// Score with undefined collapsing to zero.
    pub fn or_zero(&self) -> f64 {
        self.mean.unwrap_or(0.0)
    }
}

/// How exclusively the head's OV circuit raises each sampled token's own
/// logit from its own embedding: softmax over the sample of the OV
/// vocabulary projection, then the same rectified-excess machinery as the
/// relation index with the token itself as tail.
pub fn copying_score(
    weights: &ModelWeights,
    layer: usize,
    head: usize,
    sample_tokens: &[u32],
) -> Result<CopyingScore> {
    let cfg = &weights.config;
    let mut distinct = sample_tokens.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 16 {
        return Err(Error::Input(format!(
            "copying score needs at least 16 distinct sample tokens, got {}",
            distinct.len()
        )));
    }
    if let Some(&bad) = sample_tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(Error::Input(format!(
            "sample token {bad} out of vocab range {}",
            cfg.vocab_size
        )));
    }
    let c = build_circuits(weights, layer, head)?;
    let d = cfg.d_model;
    let v = cfg.vocab_size;

    let mut defined = 0usize;
    let mut acc = 0.0f64;
    for (si, &tok) in sample_tokens.iter().enumerate() {
        // the token's own embedding, no position
        let x = weights.w_e.row(tok as usize);
        let mut mid = vec![0.0f64; d];
        for (p, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let row = c.w_ov.row(p);
            let xv = f64::from(xv);
            for (m, &w) in mid.iter_mut().zip(row) {
                *m += xv * f64::from(w);
            }
        }
        let logits: Vec<f64> = sample_tokens
            .iter()
            .map(|&t| {
                let mut l = 0.0f64;
                for (p, &mv) in mid.iter().enumerate() {
                    if mv == 0.0 {
                        continue;
                    }
                    l += mv * f64::from(weights.w_u.at(p, t as usize));
                }
                l
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
        let p: Vec<f64> = logits.iter().map(|&l| (l - max).exp() / z).collect();
        if let Some(a) = relation_score(&p, si)? {
            acc += a;
            defined += 1;
        }
        let _ = v;
    }
    Ok(CopyingScore {
        mean: (defined > 0).then(|| acc / defined as f64),
        defined,
        total: sample_tokens.len(),
    })
}
