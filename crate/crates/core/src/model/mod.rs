//! Decoder-only transformer: configuration, weights, forward pass with
//! attention capture, and deterministic weight serialization.
//!
//! No bias terms anywhere; positions are a learned absolute table; the
//! full variant adds pre-norm RMS normalization and a GELU MLP per layer,
//! and nothing else, so an ablation flag recovers the attention-only
//! variant exactly.

pub(crate) mod container;
pub(crate) mod engine;
mod induction;

pub use induction::build_induction_model;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::TensorF32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "attention-only")]
    AttentionOnly,
    #[serde(rename = "full")]
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub variant: Variant,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model != self.n_heads * self.d_head {
            return Err(Error::Config(format!(
                "d_model {} != n_heads {} * d_head {}",
                self.d_model, self.n_heads, self.d_head
            )));
        }
        if self.n_layers == 0
            || self.n_heads == 0
            || self.d_head == 0
            || self.vocab_size == 0
        {
            return Err(Error::Config("all sizes must be >= 1".into()));
        }
        if self.max_seq_len < 2 {
            return Err(Error::Config("max_seq_len must be >= 2".into()));
        }
        Ok(())
    }

    pub fn mlp_hidden(&self) -> usize {
        4 * self.d_model
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    /// d_model x d_head
    pub w_q: TensorF32,
    pub w_k: TensorF32,
    pub w_v: TensorF32,
    /// d_head x d_model
    pub w_o: TensorF32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    /// d_model x 4*d_model
    pub w_fc1: TensorF32,
    /// 4*d_model x d_model
    pub w_fc2: TensorF32,
    /// pre-attention RMS gain, length d_model
    pub gain_attn: TensorF32,
    /// pre-MLP RMS gain, length d_model
    pub gain_mlp: TensorF32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub heads: Vec<HeadWeights>,
    /// Present only in the full variant.
    pub mlp: Option<MlpWeights>,
}

/// All learned matrices, addressable per layer and per head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    /// vocab_size x d_model
    pub w_e: TensorF32,
    /// max_seq_len x d_model
    pub w_pos: TensorF32,
    pub layers: Vec<LayerWeights>,
    /// d_model x vocab_size
    pub w_u: TensorF32,
}

impl ModelWeights {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let dh = config.d_head;
        let layers = (0..config.n_layers)
            .map(|_| LayerWeights {
                heads: (0..config.n_heads)
                    .map(|_| HeadWeights {
                        w_q: TensorF32::zeros(vec![d, dh]),
                        w_k: TensorF32::zeros(vec![d, dh]),
                        w_v: TensorF32::zeros(vec![d, dh]),
                        w_o: TensorF32::zeros(vec![dh, d]),
                    })
                    .collect(),
                mlp: match config.variant {
                    Variant::AttentionOnly => None,
                    Variant::Full => Some(MlpWeights {
                        w_fc1: TensorF32::zeros(vec![d, config.mlp_hidden()]),
                        w_fc2: TensorF32::zeros(vec![config.mlp_hidden(), d]),
                        gain_attn: TensorF32::new(vec![d], vec![1.0; d]).unwrap(),
                        gain_mlp: TensorF32::new(vec![d], vec![1.0; d]).unwrap(),
                    }),
                },
            })
            .collect();
        Ok(Self {
            config,
            w_e: TensorF32::zeros(vec![config.vocab_size, d]),
            w_pos: TensorF32::zeros(vec![config.max_seq_len, d]),
            layers,
            w_u: TensorF32::zeros(vec![d, config.vocab_size]),
        })
    }

    /// GPT-style init: N(0, 0.02) everywhere, output projections scaled
    /// down by sqrt(2*n_layers), RMS gains at one.
    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        use rand_chacha::ChaCha12Rng;
        let mut w = Self::zeros(config)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let resid_scale = 1.0 / ((2 * config.n_layers) as f32).sqrt();
        fill_normal(&mut rng, &mut w.w_e, 0.02);
        fill_normal(&mut rng, &mut w.w_pos, 0.02);
        for layer in &mut w.layers {
            for h in &mut layer.heads {
                fill_normal(&mut rng, &mut h.w_q, 0.02);
                fill_normal(&mut rng, &mut h.w_k, 0.02);
                fill_normal(&mut rng, &mut h.w_v, 0.02);
                fill_normal(&mut rng, &mut h.w_o, 0.02 * resid_scale);
            }
            if let Some(mlp) = &mut layer.mlp {
                fill_normal(&mut rng, &mut mlp.w_fc1, 0.02);
                fill_normal(&mut rng, &mut mlp.w_fc2, 0.02 * resid_scale);
            }
        }
        fill_normal(&mut rng, &mut w.w_u, 0.02);
        Ok(w)
    }

    /// Stable (name, tensor) listing used by serialization and the optimizer.
    pub fn tensor_entries(&self) -> Vec<(String, &TensorF32)> {
        let mut out: Vec<(String, &TensorF32)> = vec![
            ("w_e".into(), &self.w_e),
            ("w_pos".into(), &self.w_pos),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (h, head) in layer.heads.iter().enumerate() {
                out.push((format!("layer{l}.head{h}.w_q"), &head.w_q));
                out.push((format!("layer{l}.head{h}.w_k"), &head.w_k));
                out.push((format!("layer{l}.head{h}.w_v"), &head.w_v));
                out.push((format!("layer{l}.head{h}.w_o"), &head.w_o));
            }
            if let Some(mlp) = &layer.mlp {
                out.push((format!("layer{l}.mlp.w_fc1"), &mlp.w_fc1));
                out.push((format!("layer{l}.mlp.w_fc2"), &mlp.w_fc2));
                out.push((format!("layer{l}.mlp.gain_attn"), &mlp.gain_attn));
                out.push((format!("layer{l}.mlp.gain_mlp"), &mlp.gain_mlp));
            }
        }
        out.push(("w_u".into(), &self.w_u));
        out
    }

    pub(crate) fn tensor_slot(&mut self, name: &str) -> Option<&mut TensorF32> {
        match name {
            "w_e" => return Some(&mut self.w_e),
            "w_pos" => return Some(&mut self.w_pos),
            "w_u" => return Some(&mut self.w_u),
            _ => {}
        }
        let rest = name.strip_prefix("layer")?;
        let (l, rest) = rest.split_once('.')?;
        let l: usize = l.parse().ok()?;
        let layer = self.layers.get_mut(l)?;
        if let Some(rest) = rest.strip_prefix("head") {
            let (h, field) = rest.split_once('.')?;
            let h: usize = h.parse().ok()?;
            let head = layer.heads.get_mut(h)?;
            return match field {
                "w_q" => Some(&mut head.w_q),
                "w_k" => Some(&mut head.w_k),
                "w_v" => Some(&mut head.w_v),
                "w_o" => Some(&mut head.w_o),
                _ => None,
            };
        }
        if let Some(field) = rest.strip_prefix("mlp.") {
            let mlp = layer.mlp.as_mut()?;
            return match field {
                "w_fc1" => Some(&mut mlp.w_fc1),
                "w_fc2" => Some(&mut mlp.w_fc2),
                "gain_attn" => Some(&mut mlp.gain_attn),
                "gain_mlp" => Some(&mut mlp.gain_mlp),
                _ => None,
            };
        }
        None
    }

    pub fn head(&self, layer: usize, head: usize) -> Result<&HeadWeights> {
        self.layers
            .get(layer)
            .and_then(|l| l.heads.get(head))
            .ok_or_else(|| {
                Error::Input(format!(
                    "layer {layer} head {head} out of range for {}x{}",
                    self.config.n_layers, self.config.n_heads
                ))
            })
    }

    /// Embedding-plus-position row for token `t` at position `p`.
    pub fn embed_at(&self, token: u32, position: usize) -> Result<Vec<f32>> {
        if token as usize >= self.config.vocab_size {
            return Err(Error::Input(format!(
                "token id {token} out of range for vocab {}",
                self.config.vocab_size
            )));
        }
        if position >= self.config.max_seq_len {
            return Err(Error::Input(format!(
                "position {position} exceeds max_seq_len {}",
                self.config.max_seq_len
            )));
        }
        Ok(self
            .w_e
            .row(token as usize)
            .iter()
            .zip(self.w_pos.row(position))
            .map(|(a, b)| a + b)
            .collect())
    }
}

fn fill_normal(rng: &mut rand_chacha::ChaCha12Rng, t: &mut TensorF32, std: f32) {
    use rand::Rng;
    // Box-Muller keeps us off rand_distr for one distribution.
    let data = t.data_mut();
    let mut i = 0;
    while i < data.len() {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        data[i] = (r * c) as f32 * std;
        i += 1;
        if i < data.len() {
            data[i] = (r * s) as f32 * std;
            i += 1;
        }
    }
}

/// Per-layer, per-head causal attention matrices captured during a forward
/// pass.
#[derive(Debug, Clone)]
pub struct AttentionRecord {
    pub tokens: Vec<u32>,
    n_heads: usize,
    /// layer-major, then head: (n_layers*n_heads) matrices of N x N
    probs: Vec<TensorF32>,
}

impl AttentionRecord {
    pub(crate) fn new(tokens: Vec<u32>, n_heads: usize, probs: Vec<TensorF32>) -> Self {
        Self {
            tokens,
            n_heads,
            probs,
        }
    }

    pub fn head(&self, layer: usize, head: usize) -> &TensorF32 {
        &self.probs[layer * self.n_heads + head]
    }

    pub fn n_layers(&self) -> usize {
        self.probs.len() / self.n_heads
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn seq_len(&self) -> usize {
        self.tokens.len()
    }
}

/// Causal next-token logits, optionally with every attention matrix.
pub fn forward(
    weights: &ModelWeights,
    tokens: &[u32],
    capture: bool,
) -> Result<(TensorF32, Option<AttentionRecord>)> {
    forward_with_opts(weights, tokens, capture, false)
}

/// As `forward`; `ablate_mlp_norm` drops MLP and norm sublayers so a full
/// variant runs as attention-only.
pub fn forward_with_opts(
    weights: &ModelWeights,
    tokens: &[u32],
    capture: bool,
    ablate_mlp_norm: bool,
) -> Result<(TensorF32, Option<AttentionRecord>)> {
    let ew = engine::EngineWeights::<f32>::from_model(weights);
    let cache = engine::forward(&ew, tokens, ablate_mlp_norm)?;
    let n = tokens.len();
    let logits = TensorF32::new(vec![n, weights.config.vocab_size], cache.logits.clone())?;
    let record = if capture {
        Some(engine::attention_record(&ew.cfg, &cache, tokens))
    } else {
        None
    };
    Ok((logits, record))
}

/// Per-position next-token cross-entropy losses (length N-1), in nats.
pub fn token_losses(weights: &ModelWeights, tokens: &[u32]) -> Result<Vec<f64>> {
    let ew = engine::EngineWeights::<f32>::from_model(weights);
    let cache = engine::forward(&ew, tokens, false)?;
    Ok(engine::token_losses(&ew.cfg, &cache, tokens))
}

/// Greedy single-token generation: argmax of the final-position logits.
pub fn greedy_next_token(weights: &ModelWeights, tokens: &[u32]) -> Result<u32> {
    let ew = engine::EngineWeights::<f32>::from_model(weights);
    engine::greedy_next(&ew, tokens)
}

pub fn save_weights(weights: &ModelWeights, path: &std::path::Path) -> Result<()> {
    container::save_model(weights, path)
}

pub fn load_weights(path: &std::path::Path) -> Result<ModelWeights> {
    container::load_model(path)
}
