//! Hand-wired two-layer induction model, used as a construction oracle for
//! the prefix-matching and copying metrics.
//!
//! The residual stream is split into three blocks: T0 (token one-hots,
//! dims 0..V), T1 (shifted-token scratch, dims V..2V), and P (position
//! one-hots, dims 2V..2V+N). The first head copies each token's identity
//! into the next position's T1 block ("previous token"); the second head
//! matches the current token's T0 against T1 keys ("induction") and copies
//! the attended token's T0 block to the output.

use super::{ModelConfig, ModelWeights, Variant};
use crate::error::{Error, Result};

/// Post-softmax-scale logit gain. The stored QK entries are multiplied by
/// sqrt(d_head) so the forward pass's 1/sqrt(d_head) leaves exactly this
/// gain, which saturates attention (> 0.99 mass) without f32 overflow.
const GAIN: f32 = 50.0;

/// OV gain of the induction head. The attended token's logit must beat the
/// current token's own embedding, which reaches the unembedding through
/// the residual stream with weight 1.
const OV_GAIN: f32 = 2.0;

pub fn build_induction_model(vocab_size: usize, max_len: usize) -> Result<ModelWeights> {
    if vocab_size < 2 {
        return Err(Error::Config("induction model needs vocab_size >= 2".into()));
    }
    if max_len < 4 {
        return Err(Error::Config("induction model needs max_len >= 4".into()));
    }
    let v = vocab_size;
    let n = max_len;
    let d = 2 * v + n;
    let cfg = ModelConfig {
        n_layers: 2,
        n_heads: 1,
        d_model: d,
        d_head: d,
        vocab_size: v,
        max_seq_len: n,
        variant: Variant::AttentionOnly,
    };
    let mut w = ModelWeights::zeros(cfg)?;
    let t0 = |tok: usize| tok;
    let t1 = |tok: usize| v + tok;
    let pos = |p: usize| 2 * v + p;
    let qk_gain = GAIN * (d as f32).sqrt();

    // embeddings: token one-hot in T0, position one-hot in P
    for tok in 0..v {
        w.w_e.data_mut()[tok * d + t0(tok)] = 1.0;
    }
    for p in 0..n {
        w.w_pos.data_mut()[p * d + pos(p)] = 1.0;
    }

    // layer 1: previous-token head.
    // W_q = gain * identity on P; W_k shifts P(p-1) -> P(p), so
    // W_QK = gain * sum_{p>=1} e_P(p) e_P(p-1)^T.
    {
        let head = &mut w.layers[0].heads[0];
        let wq = head.w_q.data_mut();
        for p in 0..n {
            wq[pos(p) * d + pos(p)] = qk_gain;
        }
        let wk = head.w_k.data_mut();
        for p in 1..n {
            wk[pos(p - 1) * d + pos(p)] = 1.0;
        }
        // W_OV maps T0(v) -> T1(v): W_v does the block move, W_o = identity.
        let wv = head.w_v.data_mut();
        for tok in 0..v {
            wv[t0(tok) * d + t1(tok)] = 1.0;
        }
        let wo = head.w_o.data_mut();
        for i in 0..d {
            wo[i * d + i] = 1.0;
        }
    }

    // layer 2: induction head.
    // W_q = gain * identity on T0; W_k maps T1(v) -> T0(v) and subtracts
    // the P(0) component from every T0 coordinate, so W_QK =
    // gain * sum_v e_T0(v) (e_T1(v) - e_P(0))^T. The P(0) term repels all
    // queries from key position 0, whose unavoidable self-attention in
    // layer 1 wrote T1(t_0) there and would otherwise shadow the true
    // induction target whenever the current token equals t_0.
    {
        let head = &mut w.layers[1].heads[0];
        let wq = head.w_q.data_mut();
        for tok in 0..v {
            wq[t0(tok) * d + t0(tok)] = qk_gain;
        }
        let wk = head.w_k.data_mut();
        for tok in 0..v {
            wk[t1(tok) * d + t0(tok)] = 1.0;
            wk[pos(0) * d + t0(tok)] = -1.0;
        }
        // W_OV = OV_GAIN * identity on T0.
        let wv = head.w_v.data_mut();
        for tok in 0..v {
            wv[t0(tok) * d + t0(tok)] = 1.0;
        }
        let wo = head.w_o.data_mut();
        for i in 0..d {
            wo[i * d + i] = if i < v { OV_GAIN } else { 1.0 };
        }
    }

    // unembedding: T0(v) -> vocab logit v, all other rows zero
    for tok in 0..v {
        w.w_u.data_mut()[t0(tok) * v + tok] = 1.0;
    }

    Ok(w)
}
