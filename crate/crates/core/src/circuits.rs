//! QK/OV circuit computation: each head's attention behavior and output
//! behavior as single d x d matrices acting directly on input embeddings,
//! plus an exactness check of the per-head rewrite of multi-head attention.

use crate::error::{Error, Result};
use crate::model::ModelWeights;
use crate::tensor::{self, TensorF32};

/// One head's circuits. `w_qk = W_q W_k^T`, `w_ov = W_v W_o`, both d x d,
/// computed in f64 and stored f32.
#[derive(Debug, Clone)]
pub struct CircuitMatrices {
    pub layer: usize,
    pub head: usize,
    pub d_head: usize,
    pub w_qk: TensorF32,
    pub w_ov: TensorF32,
}

pub fn build_circuits(weights: &ModelWeights, layer: usize, head: usize) -> Result<CircuitMatrices> {
    let h = weights.head(layer, head)?;
    let d = weights.config.d_model;
    let dh = weights.config.d_head;
    let w_qk = matmul_f64_abt(h.w_q.data(), h.w_k.data(), d, dh);
    let w_ov = matmul_f64(h.w_v.data(), h.w_o.data(), d, dh, d);
    Ok(CircuitMatrices {
        layer,
        head,
        d_head: dh,
        w_qk: TensorF32::new(vec![d, d], w_qk)?,
        w_ov: TensorF32::new(vec![d, d], w_ov)?,
    })
}

/// a[m x k] * b[k x n] with f64 accumulation, rounded to f32.
fn matmul_f64(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            let mut acc = 0.0f64;
            for p in 0..k {
                acc += f64::from(arow[p]) * f64::from(b[p * n + j]);
            }
            orow[j] = acc as f32;
        }
    }
    out
}

/// a[m x k] * b[m2 x k]^T -> m x m2, f64 accumulation.
fn matmul_f64_abt(a: &[f32], b: &[f32], m: usize, k: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * m];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0f64;
            for p in 0..k {
                acc += f64::from(arow[p]) * f64::from(brow[p]);
            }
            out[i * m + j] = acc as f32;
        }
    }
    out
}

/// Causal row-stochastic attention computed from embeddings only:
/// `softmax(x W_QK x^T / sqrt(d_head))`.
pub fn circuit_attention(x: &TensorF32, c: &CircuitMatrices) -> Result<TensorF32> {
    circuit_attention_scaled(x, c, true)
}

/// As `circuit_attention`; `scale = false` drops the 1/sqrt(d_head) factor
/// (sensitivity toggle for the paper formula that omits it).
pub fn circuit_attention_scaled(
    x: &TensorF32,
    c: &CircuitMatrices,
    scale: bool,
) -> Result<TensorF32> {
    if !x.is_matrix() || x.cols() != c.w_qk.rows() {
        return Err(Error::Shape(format!(
            "embeddings {:?} do not match circuit dim {}",
            x.shape(),
            c.w_qk.rows()
        )));
    }
    let n = x.rows();
    let xq = tensor::matmul(x, &c.w_qk)?; // n x d
    // scores = xq * x^T, causal
    let d = x.cols();
    let factor = if scale {
        1.0 / (c.d_head as f64).sqrt()
    } else {
        1.0
    };
    let mut scores = TensorF32::zeros(vec![n, n]);
    for j in 0..n {
        for k in 0..=j {
            let mut acc = 0.0f64;
            for p in 0..d {
                acc += f64::from(xq.at(j, p)) * f64::from(x.at(k, p));
            }
            scores.data_mut()[j * n + k] = (acc * factor) as f32;
        }
    }
    tensor::masked_softmax_rows(&scores, true)
}

/// Raw logits over the vocabulary from one head's OV circuit:
/// `x_j W_OV W_u` (softmax is applied downstream).
pub fn ov_vocab_projection(x_j: &[f32], c: &CircuitMatrices, w_u: &TensorF32) -> Result<Vec<f32>> {
    let d = c.w_ov.rows();
    if x_j.len() != d {
        return Err(Error::Shape(format!(
            "embedding length {} does not match circuit dim {d}",
            x_j.len()
        )));
    }
    if w_u.rows() != d {
        return Err(Error::Shape(format!(
            "unembedding rows {} do not match circuit dim {d}",
            w_u.rows()
        )));
    }
    let v = w_u.cols();
    let mut mid = vec![0.0f64; d];
    for (p, &xv) in x_j.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let row = c.w_ov.row(p);
        let xv = f64::from(xv);
        for (m, &w) in mid.iter_mut().zip(row) {
            *m += xv * f64::from(w);
        }
    }
    let mut out = vec![0.0f32; v];
    for (p, &mv) in mid.iter().enumerate() {
        if mv == 0.0 {
            continue;
        }
        let row = w_u.row(p);
        for (o, &w) in out.iter_mut().zip(row) {
            *o += (mv * f64::from(w)) as f32;
        }
    }
    Ok(out)
}

/// Compare the standard per-head attention path against the circuit path
/// on the same embeddings; returns the max absolute elementwise deviation
/// of the layer outputs. The two sides are algebraically identical.
pub fn verify_mha_rewrite(weights: &ModelWeights, layer: usize, x: &TensorF32) -> Result<f32> {
    let cfg = &weights.config;
    if !x.is_matrix() || x.cols() != cfg.d_model {
        return Err(Error::Shape(format!(
            "embeddings {:?} do not match d_model {}",
            x.shape(),
            cfg.d_model
        )));
    }
    let n = x.rows();
    let d = cfg.d_model;
    let scale = 1.0 / (cfg.d_head as f64).sqrt();

    // standard path: per-head q/k/v projections
    let mut standard = TensorF32::zeros(vec![n, d]);
    for h in 0..cfg.n_heads {
        let hw = weights.head(layer, h)?;
        let q = tensor::matmul(x, &hw.w_q)?;
        let k = tensor::matmul(x, &hw.w_k)?;
        let v = tensor::matmul(x, &hw.w_v)?;
        let dh = cfg.d_head;
        let mut scores = TensorF32::zeros(vec![n, n]);
        for j in 0..n {
            for kk in 0..=j {
                let mut acc = 0.0f64;
                for p in 0..dh {
                    acc += f64::from(q.at(j, p)) * f64::from(k.at(kk, p));
                }
                scores.data_mut()[j * n + kk] = (acc * scale) as f32;
            }
        }
        let probs = tensor::masked_softmax_rows(&scores, true)?;
        let ctx = tensor::matmul(&probs, &v)?;
        let out = tensor::matmul(&ctx, &hw.w_o)?;
        for (acc, &o) in standard.data_mut().iter_mut().zip(out.data()) {
            *acc += o;
        }
    }

    // circuit path: softmax(x W_QK x^T / sqrt(dh)) x W_OV
    let mut circuit = TensorF32::zeros(vec![n, d]);
    for h in 0..cfg.n_heads {
        let c = build_circuits(weights, layer, h)?;
        let probs = circuit_attention(x, &c)?;
        let xov = tensor::matmul(x, &c.w_ov)?;
        let out = tensor::matmul(&probs, &xov)?;
        for (acc, &o) in circuit.data_mut().iter_mut().zip(out.data()) {
            *acc += o;
        }
    }

    let dev = standard
        .data()
        .iter()
        .zip(circuit.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    Ok(dev)
}
