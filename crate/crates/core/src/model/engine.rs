//! Fixed-architecture forward and reverse passes, generic over precision.
//!
//! Training runs the f32 instantiation; gradient checking runs the same
//! code at f64 so central finite differences are not drowned by storage
//! rounding. Reductions (softmax sums, norms, losses) accumulate in f64
//! in both instantiations.

use super::{AttentionRecord, ModelConfig, ModelWeights, Variant};
use crate::error::{Error, Result};
use crate::tensor::TensorF32;

const RMS_EPS: f64 = 1e-6;
const GELU_A: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_B: f64 = 0.044_715;

pub(crate) trait Scalar:
    num_traits::Float + num_traits::NumAssign + Send + Sync + std::fmt::Debug + 'static
{
    fn from_f32(x: f32) -> Self;
    fn from_f64(x: f64) -> Self;
    fn as_f32(self) -> f32;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f32(x: f32) -> Self {
        x
    }
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f32(self) -> f32 {
        self
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn from_f32(x: f32) -> Self {
        f64::from(x)
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
    fn as_f64(self) -> f64 {
        self
    }
}

// ---------------------------------------------------------------------------
// Parameter buffers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct HeadParams<T> {
    pub wq: Vec<T>, // d x dh
    pub wk: Vec<T>, // d x dh
    pub wv: Vec<T>, // d x dh
    pub wo: Vec<T>, // dh x d
}

#[derive(Debug, Clone)]
pub(crate) struct MlpParams<T> {
    pub w1: Vec<T>, // d x 4d
    pub w2: Vec<T>, // 4d x d
    pub g1: Vec<T>, // d
    pub g2: Vec<T>, // d
}

#[derive(Debug, Clone)]
pub(crate) struct LayerParams<T> {
    pub heads: Vec<HeadParams<T>>,
    pub mlp: Option<MlpParams<T>>,
}

#[derive(Debug, Clone)]
pub(crate) struct ParamSet<T> {
    pub we: Vec<T>,   // V x d
    pub wpos: Vec<T>, // N_max x d
    pub layers: Vec<LayerParams<T>>,
    pub wu: Vec<T>, // d x V
}

impl<T: Scalar> ParamSet<T> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let dh = cfg.d_head;
        let z = T::zero();
        ParamSet {
            we: vec![z; cfg.vocab_size * d],
            wpos: vec![z; cfg.max_seq_len * d],
            layers: (0..cfg.n_layers)
                .map(|_| LayerParams {
                    heads: (0..cfg.n_heads)
                        .map(|_| HeadParams {
                            wq: vec![z; d * dh],
                            wk: vec![z; d * dh],
                            wv: vec![z; d * dh],
                            wo: vec![z; dh * d],
                        })
                        .collect(),
                    mlp: match cfg.variant {
                        Variant::AttentionOnly => None,
                        Variant::Full => Some(MlpParams {
                            w1: vec![z; d * cfg.mlp_hidden()],
                            w2: vec![z; cfg.mlp_hidden() * d],
                            g1: vec![z; d],
                            g2: vec![z; d],
                        }),
                    },
                })
                .collect(),
            wu: vec![z; d * cfg.vocab_size],
        }
    }

    /// Every tensor buffer in a fixed order matching
    /// `ModelWeights::tensor_entries`.
    pub fn tensors(&self) -> Vec<&Vec<T>> {
        let mut out: Vec<&Vec<T>> = vec![&self.we, &self.wpos];
        for layer in &self.layers {
            for h in &layer.heads {
                out.push(&h.wq);
                out.push(&h.wk);
                out.push(&h.wv);
                out.push(&h.wo);
            }
            if let Some(m) = &layer.mlp {
                out.push(&m.w1);
                out.push(&m.w2);
                out.push(&m.g1);
                out.push(&m.g2);
            }
        }
        out.push(&self.wu);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out: Vec<&mut Vec<T>> = vec![&mut self.we, &mut self.wpos];
        for layer in &mut self.layers {
            for h in &mut layer.heads {
                out.push(&mut h.wq);
                out.push(&mut h.wk);
                out.push(&mut h.wv);
                out.push(&mut h.wo);
            }
            if let Some(m) = &mut layer.mlp {
                out.push(&mut m.w1);
                out.push(&mut m.w2);
                out.push(&mut m.g1);
                out.push(&mut m.g2);
            }
        }
        out.push(&mut self.wu);
        out
    }
}

#[derive(Debug, Clone)]
pub(crate) struct EngineWeights<T> {
    pub cfg: ModelConfig,
    pub p: ParamSet<T>,
}

fn cast<T: Scalar>(src: &[f32]) -> Vec<T> {
    src.iter().map(|&x| T::from_f32(x)).collect()
}

impl<T: Scalar> EngineWeights<T> {
    pub fn from_model(w: &ModelWeights) -> Self {
        let cfg = w.config;
        let layers = w
            .layers
            .iter()
            .map(|layer| LayerParams {
                heads: layer
                    .heads
                    .iter()
                    .map(|h| HeadParams {
                        wq: cast(h.w_q.data()),
                        wk: cast(h.w_k.data()),
                        wv: cast(h.w_v.data()),
                        wo: cast(h.w_o.data()),
                    })
                    .collect(),
                mlp: layer.mlp.as_ref().map(|m| MlpParams {
                    w1: cast(m.w_fc1.data()),
                    w2: cast(m.w_fc2.data()),
                    g1: cast(m.gain_attn.data()),
                    g2: cast(m.gain_mlp.data()),
                }),
            })
            .collect();
        EngineWeights {
            cfg,
            p: ParamSet {
                we: cast(w.w_e.data()),
                wpos: cast(w.w_pos.data()),
                layers,
                wu: cast(w.w_u.data()),
            },
        }
    }

    pub fn to_model(&self) -> ModelWeights {
        let cfg = self.cfg;
        let d = cfg.d_model;
        let dh = cfg.d_head;
        let t = |v: &Vec<T>, shape: Vec<usize>| {
            TensorF32::new(shape, v.iter().map(|&x| x.as_f32()).collect())
                .expect("engine weights stay finite")
        };
        ModelWeights {
            config: cfg,
            w_e: t(&self.p.we, vec![cfg.vocab_size, d]),
            w_pos: t(&self.p.wpos, vec![cfg.max_seq_len, d]),
            layers: self
                .p
                .layers
                .iter()
                .map(|layer| super::LayerWeights {
                    heads: layer
                        .heads
                        .iter()
                        .map(|h| super::HeadWeights {
                            w_q: t(&h.wq, vec![d, dh]),
                            w_k: t(&h.wk, vec![d, dh]),
                            w_v: t(&h.wv, vec![d, dh]),
                            w_o: t(&h.wo, vec![dh, d]),
                        })
                        .collect(),
                    mlp: layer.mlp.as_ref().map(|m| super::MlpWeights {
                        w_fc1: t(&m.w1, vec![d, cfg.mlp_hidden()]),
                        w_fc2: t(&m.w2, vec![cfg.mlp_hidden(), d]),
                        gain_attn: t(&m.g1, vec![d]),
                        gain_mlp: t(&m.g2, vec![d]),
                    }),
                })
                .collect(),
            w_u: t(&self.p.wu, vec![d, cfg.vocab_size]),
        }
    }
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct LayerCache<T> {
    pub x_in: Vec<T>,    // N x d
    pub normed1: Vec<T>, // N x d (== x_in without norms)
    pub inv_rms1: Vec<T>,
    pub q: Vec<T>,     // H x (N x dh), head-major
    pub k: Vec<T>,     // H x (N x dh)
    pub v: Vec<T>,     // H x (N x dh)
    pub probs: Vec<T>, // H x (N x N)
    pub ctx: Vec<T>,   // H x (N x dh)
    pub x_mid: Vec<T>, // N x d
    pub normed2: Vec<T>,
    pub inv_rms2: Vec<T>,
    pub h_pre: Vec<T>, // N x 4d
    pub h_act: Vec<T>, // N x 4d
}

#[derive(Debug, Clone)]
pub(crate) struct Cache<T> {
    pub n: usize,
    #[allow(dead_code)]
    pub x0: Vec<T>,
    pub layers: Vec<LayerCache<T>>,
    pub final_x: Vec<T>,
    pub logits: Vec<T>,
}

pub(crate) fn matmul_t<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
}

/// c[m x n] += a[k x m]^T * b[k x n]
fn matmul_at_b<T: Scalar>(a: &[T], b: &[T], c: &mut [T], k: usize, m: usize, n: usize) {
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
}

/// c[m x k] += a[m x n] * b[k x n]^T, via an explicit transpose of `b` so
/// the inner loop is broadcast-shaped (a serial dot product would not
/// vectorize without float reassociation).
fn matmul_a_bt<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, n: usize, k: usize) {
    let bt = transpose(b, k, n);
    matmul_t(a, &bt, c, m, n, k);
}

/// b[k x n] -> n x k
fn transpose<T: Scalar>(b: &[T], k: usize, n: usize) -> Vec<T> {
    let mut bt = vec![T::zero(); n * k];
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for j in 0..n {
            bt[j * k + p] = brow[j];
        }
    }
    bt
}

fn softmax_prefix<T: Scalar>(row: &mut [T]) {
    let mut max = T::neg_infinity();
    for &x in row.iter() {
        if x > max {
            max = x;
        }
    }
    let mut sum = 0.0f64;
    for x in row.iter_mut() {
        let e = (*x - max).exp();
        *x = e;
        sum += e.as_f64();
    }
    let inv = 1.0 / sum;
    for x in row.iter_mut() {
        *x = T::from_f64(x.as_f64() * inv);
    }
}

fn rms_norm<T: Scalar>(x: &[T], gain: &[T], out: &mut [T], inv_rms: &mut [T], n: usize, d: usize) {
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mut ms = 0.0f64;
        for &v in row {
            let f = v.as_f64();
            ms += f * f;
        }
        let inv = T::from_f64(1.0 / (ms / d as f64 + RMS_EPS).sqrt());
        inv_rms[i] = inv;
        let orow = &mut out[i * d..(i + 1) * d];
        for j in 0..d {
            orow[j] = row[j] * inv * gain[j];
        }
    }
}

fn gelu<T: Scalar>(x: T) -> T {
    let a = T::from_f64(GELU_A);
    let b = T::from_f64(GELU_B);
    let half = T::from_f64(0.5);
    let u = a * (x + b * x * x * x);
    half * x * (T::one() + u.tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let a = T::from_f64(GELU_A);
    let b = T::from_f64(GELU_B);
    let half = T::from_f64(0.5);
    let u = a * (x + b * x * x * x);
    let t = u.tanh();
    let du = a * (T::one() + T::from_f64(3.0) * b * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

pub(crate) fn forward<T: Scalar>(
    w: &EngineWeights<T>,
    tokens: &[u32],
    ablate_mlp_norm: bool,
) -> Result<Cache<T>> {
    let cfg = &w.cfg;
    let n = tokens.len();
    if n == 0 {
        return Err(Error::Input("empty token sequence".into()));
    }
    if n > cfg.max_seq_len {
        return Err(Error::Input(format!(
            "sequence length {n} exceeds max_seq_len {}",
            cfg.max_seq_len
        )));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(Error::Input(format!(
            "token id {bad} out of range for vocab {}",
            cfg.vocab_size
        )));
    }

    let d = cfg.d_model;
    let dh = cfg.d_head;
    let nh = cfg.n_heads;
    let inv_sqrt_dh = T::from_f64(1.0 / (dh as f64).sqrt());

    let mut x0 = vec![T::zero(); n * d];
    for (i, &t) in tokens.iter().enumerate() {
        let e = &w.p.we[t as usize * d..(t as usize + 1) * d];
        let p = &w.p.wpos[i * d..(i + 1) * d];
        let row = &mut x0[i * d..(i + 1) * d];
        for j in 0..d {
            row[j] = e[j] + p[j];
        }
    }

    let use_norms = !ablate_mlp_norm && cfg.variant == Variant::Full;
    let mut x = x0.clone();
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for layer in &w.p.layers {
        let x_in = x.clone();
        let (normed1, inv_rms1) = if use_norms {
            let mlp = layer.mlp.as_ref().expect("full variant has gains");
            let mut out = vec![T::zero(); n * d];
            let mut inv = vec![T::zero(); n];
            rms_norm(&x_in, &mlp.g1, &mut out, &mut inv, n, d);
            (out, inv)
        } else {
            (x_in.clone(), Vec::new())
        };

        let mut q = vec![T::zero(); nh * n * dh];
        let mut k = vec![T::zero(); nh * n * dh];
        let mut v = vec![T::zero(); nh * n * dh];
        let mut probs = vec![T::zero(); nh * n * n];
        let mut ctx = vec![T::zero(); nh * n * dh];

        for (h, head) in layer.heads.iter().enumerate() {
            let qh = &mut q[h * n * dh..(h + 1) * n * dh];
            let kh = &mut k[h * n * dh..(h + 1) * n * dh];
            let vh = &mut v[h * n * dh..(h + 1) * n * dh];
            matmul_t(&normed1, &head.wq, qh, n, d, dh);
            matmul_t(&normed1, &head.wk, kh, n, d, dh);
            matmul_t(&normed1, &head.wv, vh, n, d, dh);

            // scores = q k^T (full matrix; rows are masked to the causal
            // prefix below, leaving exact zeros above the diagonal)
            let ph = &mut probs[h * n * n..(h + 1) * n * n];
            matmul_a_bt(qh, kh, ph, n, dh, n);
            for j in 0..n {
                let row = &mut ph[j * n..(j + 1) * n];
                for p in row[..=j].iter_mut() {
                    *p *= inv_sqrt_dh;
                }
                softmax_prefix(&mut row[..=j]);
                for p in row[j + 1..].iter_mut() {
                    *p = T::zero();
                }
            }

            // ctx = A v; the zero-skip in the kernel drops the masked
            // upper triangle
            let ch = &mut ctx[h * n * dh..(h + 1) * n * dh];
            matmul_t(ph, vh, ch, n, n, dh);
        }

        let mut x_mid = x_in.clone();
        for (h, head) in layer.heads.iter().enumerate() {
            let ch = &ctx[h * n * dh..(h + 1) * n * dh];
            matmul_t(ch, &head.wo, &mut x_mid, n, dh, d);
        }

        let (normed2, inv_rms2, h_pre, h_act, x_out) = if use_norms {
            let mlp = layer.mlp.as_ref().unwrap();
            let dm = cfg.mlp_hidden();
            let mut normed2 = vec![T::zero(); n * d];
            let mut inv2 = vec![T::zero(); n];
            rms_norm(&x_mid, &mlp.g2, &mut normed2, &mut inv2, n, d);
            let mut h_pre = vec![T::zero(); n * dm];
            matmul_t(&normed2, &mlp.w1, &mut h_pre, n, d, dm);
            let h_act: Vec<T> = h_pre.iter().map(|&x| gelu(x)).collect();
            let mut x_out = x_mid.clone();
            matmul_t(&h_act, &mlp.w2, &mut x_out, n, dm, d);
            (normed2, inv2, h_pre, h_act, x_out)
        } else {
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), x_mid.clone())
        };

        x = x_out;
        layers.push(LayerCache {
            x_in,
            normed1,
            inv_rms1,
            q,
            k,
            v,
            probs,
            ctx,
            x_mid,
            normed2,
            inv_rms2,
            h_pre,
            h_act,
        });
    }

    let mut logits = vec![T::zero(); n * cfg.vocab_size];
    matmul_t(&x, &w.p.wu, &mut logits, n, d, cfg.vocab_size);

    Ok(Cache {
        n,
        x0,
        layers,
        final_x: x,
        logits,
    })
}

pub(crate) fn attention_record<T: Scalar>(
    cfg: &ModelConfig,
    cache: &Cache<T>,
    tokens: &[u32],
) -> AttentionRecord {
    let n = cache.n;
    let mut mats = Vec::with_capacity(cfg.n_layers * cfg.n_heads);
    for layer in &cache.layers {
        for h in 0..cfg.n_heads {
            let ph = &layer.probs[h * n * n..(h + 1) * n * n];
            let data: Vec<f32> = ph.iter().map(|&p| p.as_f32()).collect();
            mats.push(TensorF32::new(vec![n, n], data).expect("probs finite"));
        }
    }
    AttentionRecord::new(tokens.to_vec(), cfg.n_heads, mats)
}

/// Mean next-token cross-entropy over positions 0..n-1.
pub(crate) fn mean_loss<T: Scalar>(cfg: &ModelConfig, cache: &Cache<T>, tokens: &[u32]) -> f64 {
    let losses = token_losses(cfg, cache, tokens);
    losses.iter().sum::<f64>() / losses.len() as f64
}

pub(crate) fn token_losses<T: Scalar>(
    cfg: &ModelConfig,
    cache: &Cache<T>,
    tokens: &[u32],
) -> Vec<f64> {
    let v = cfg.vocab_size;
    let mut out = Vec::with_capacity(cache.n.saturating_sub(1));
    for p in 0..cache.n.saturating_sub(1) {
        let row = &cache.logits[p * v..(p + 1) * v];
        let max = row
            .iter()
            .fold(f64::NEG_INFINITY, |m, &x| m.max(x.as_f64()));
        let mut sum = 0.0f64;
        for &x in row {
            sum += (x.as_f64() - max).exp();
        }
        let target = tokens[p + 1] as usize;
        out.push(max + sum.ln() - row[target].as_f64());
    }
    out
}

pub(crate) fn greedy_next<T: Scalar>(w: &EngineWeights<T>, tokens: &[u32]) -> Result<u32> {
    let cache = forward(w, tokens, false)?;
    let v = w.cfg.vocab_size;
    let row = &cache.logits[(cache.n - 1) * v..cache.n * v];
    let mut best = 0usize;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = i;
        }
    }
    Ok(best as u32)
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

/// Gradients of mean next-token cross-entropy w.r.t. every parameter.
/// Returns the loss alongside.
pub(crate) fn backward<T: Scalar>(
    w: &EngineWeights<T>,
    cache: &Cache<T>,
    tokens: &[u32],
    grads: &mut ParamSet<T>,
) -> f64 {
    let cfg = &w.cfg;
    let n = cache.n;
    let d = cfg.d_model;
    let dh = cfg.d_head;
    let _nh = cfg.n_heads;
    let v = cfg.vocab_size;
    let n_pred = n - 1;
    let inv_sqrt_dh = T::from_f64(1.0 / (dh as f64).sqrt());
    let use_norms = !cache.layers.is_empty() && !cache.layers[0].normed2.is_empty();

    // dlogits = (softmax - onehot) / n_pred on predicting positions
    let mut dlogits = vec![T::zero(); n * v];
    let mut loss = 0.0f64;
    let scale = 1.0 / n_pred as f64;
    for p in 0..n_pred {
        let row = &cache.logits[p * v..(p + 1) * v];
        let max = row
            .iter()
            .fold(f64::NEG_INFINITY, |m, &x| m.max(x.as_f64()));
        let mut sum = 0.0f64;
        for &x in row {
            sum += (x.as_f64() - max).exp();
        }
        let target = tokens[p + 1] as usize;
        loss += (max + sum.ln() - row[target].as_f64()) * scale;
        let drow = &mut dlogits[p * v..(p + 1) * v];
        for (j, &x) in row.iter().enumerate() {
            let prob = (x.as_f64() - max).exp() / sum;
            let hot = if j == target { 1.0 } else { 0.0 };
            drow[j] = T::from_f64((prob - hot) * scale);
        }
    }

    // unembedding
    let mut dx = vec![T::zero(); n * d];
    matmul_a_bt(&dlogits, &w.p.wu, &mut dx, n, v, d);
    matmul_at_b(&cache.final_x, &dlogits, &mut grads.wu, n, d, v);

    for (li, layer) in w.p.layers.iter().enumerate().rev() {
        let lc = &cache.layers[li];
        let gl = &mut grads.layers[li];

        // MLP sublayer
        let mut d_x_mid = dx.clone();
        if use_norms {
            let mlp = layer.mlp.as_ref().unwrap();
            let gm = gl.mlp.as_mut().unwrap();
            let dm = cfg.mlp_hidden();
            let mut d_h_act = vec![T::zero(); n * dm];
            matmul_a_bt(&dx, &mlp.w2, &mut d_h_act, n, d, dm);
            matmul_at_b(&lc.h_act, &dx, &mut gm.w2, n, dm, d);
            let mut d_h_pre = d_h_act;
            for (g, &x) in d_h_pre.iter_mut().zip(&lc.h_pre) {
                *g *= gelu_grad(x);
            }
            let mut d_normed2 = vec![T::zero(); n * d];
            matmul_a_bt(&d_h_pre, &mlp.w1, &mut d_normed2, n, dm, d);
            matmul_at_b(&lc.normed2, &d_h_pre, &mut gm.w1, n, d, dm);
            rms_norm_backward(
                &d_normed2,
                &lc.x_mid,
                &mlp.g2,
                &lc.inv_rms2,
                &mut d_x_mid,
                &mut gm.g2,
                n,
                d,
            );
        }

        // attention sublayer
        let mut d_normed1 = vec![T::zero(); n * d];
        for (h, head) in layer.heads.iter().enumerate() {
            let gh = &mut gl.heads[h];
            let qh = &lc.q[h * n * dh..(h + 1) * n * dh];
            let kh = &lc.k[h * n * dh..(h + 1) * n * dh];
            let vh = &lc.v[h * n * dh..(h + 1) * n * dh];
            let ph = &lc.probs[h * n * n..(h + 1) * n * n];
            let ch = &lc.ctx[h * n * dh..(h + 1) * n * dh];

            // through wo
            let mut d_ctx = vec![T::zero(); n * dh];
            matmul_a_bt(&d_x_mid, &head.wo, &mut d_ctx, n, d, dh);
            matmul_at_b(ch, &d_x_mid, &mut gh.wo, n, dh, d);

            // dA = d_ctx v^T; dv = A^T d_ctx. The full dA matrix is
            // computed and the junk above the diagonal zeroed below.
            let mut d_probs = vec![T::zero(); n * n];
            matmul_a_bt(&d_ctx, vh, &mut d_probs, n, dh, n);
            let mut d_v = vec![T::zero(); n * dh];
            matmul_at_b(ph, &d_ctx, &mut d_v, n, n, dh);

            // softmax backward on the causal prefix, then scale; entries
            // above the diagonal are cleared so the dq/dk matmuls see an
            // exactly lower-triangular dS
            let mut d_scores = d_probs;
            for j in 0..n {
                let prow = &ph[j * n..j * n + j + 1];
                let drow = &mut d_scores[j * n..(j + 1) * n];
                let mut dot = 0.0f64;
                for (p, g) in prow.iter().zip(drow.iter()) {
                    dot += p.as_f64() * g.as_f64();
                }
                let dot = T::from_f64(dot);
                for (g, &p) in drow[..=j].iter_mut().zip(prow.iter()) {
                    *g = p * (*g - dot) * inv_sqrt_dh;
                }
                for g in drow[j + 1..].iter_mut() {
                    *g = T::zero();
                }
            }

            // dq = dS k; dk = dS^T q
            let mut d_q = vec![T::zero(); n * dh];
            matmul_t(&d_scores, kh, &mut d_q, n, n, dh);
            let mut d_k = vec![T::zero(); n * dh];
            matmul_at_b(&d_scores, qh, &mut d_k, n, n, dh);

            // projections
            matmul_at_b(&lc.normed1, &d_q, &mut gh.wq, n, d, dh);
            matmul_at_b(&lc.normed1, &d_k, &mut gh.wk, n, d, dh);
            matmul_at_b(&lc.normed1, &d_v, &mut gh.wv, n, d, dh);
            matmul_a_bt(&d_q, &head.wq, &mut d_normed1, n, dh, d);
            matmul_a_bt(&d_k, &head.wk, &mut d_normed1, n, dh, d);
            matmul_a_bt(&d_v, &head.wv, &mut d_normed1, n, dh, d);
        }

        let mut d_x_in = d_x_mid;
        if use_norms {
            let mlp = layer.mlp.as_ref().unwrap();
            let gm = gl.mlp.as_mut().unwrap();
            rms_norm_backward(
                &d_normed1,
                &lc.x_in,
                &mlp.g1,
                &lc.inv_rms1,
                &mut d_x_in,
                &mut gm.g1,
                n,
                d,
            );
        } else {
            for (a, b) in d_x_in.iter_mut().zip(&d_normed1) {
                *a += *b;
            }
        }
        dx = d_x_in;
    }

    // embeddings
    for (i, &t) in tokens.iter().enumerate() {
        let drow = &dx[i * d..(i + 1) * d];
        let erow = &mut grads.we[t as usize * d..(t as usize + 1) * d];
        let prow = &mut grads.wpos[i * d..(i + 1) * d];
        for j in 0..d {
            erow[j] += drow[j];
            prow[j] += drow[j];
        }
    }

    loss
}

/// Accumulates dx (+=) and dgain (+=) given upstream d_normed.
#[allow(clippy::too_many_arguments)]
fn rms_norm_backward<T: Scalar>(
    d_normed: &[T],
    x: &[T],
    gain: &[T],
    inv_rms: &[T],
    dx: &mut [T],
    dgain: &mut [T],
    n: usize,
    d: usize,
) {
    for i in 0..n {
        let xrow = &x[i * d..(i + 1) * d];
        let drow = &d_normed[i * d..(i + 1) * d];
        let inv = inv_rms[i];
        let mut dot = 0.0f64;
        for j in 0..d {
            dot += (drow[j] * gain[j] * xrow[j]).as_f64();
        }
        let coef = T::from_f64(dot / d as f64) * inv * inv * inv;
        let dxrow = &mut dx[i * d..(i + 1) * d];
        for j in 0..d {
            dxrow[j] += drow[j] * gain[j] * inv - xrow[j] * coef;
            dgain[j] += drow[j] * xrow[j] * inv;
        }
    }
}
