//! Training loop: cross-entropy next-token objective, Adam with warmup +
//! cosine schedule, global-norm gradient clipping, periodic checkpoints.
//!
//! Determinism: batch composition is a pure function of (seed, step), and
//! per-sequence gradients computed in parallel are reduced in sequence
//! order, so runs are bitwise reproducible at any thread count.

mod gradcheck;

pub use gradcheck::{grad_check, GradCheckReport};

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::engine::{self, EngineWeights, ParamSet};
use crate::model::{container, ModelConfig, ModelWeights};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.95;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    /// Tokens consumed per optimizer step; must be a multiple of the
    /// model's max_seq_len (sequences are packed to full length).
    pub batch_tokens: usize,
    pub warmup_steps: u64,
    pub peak_lr: f64,
    pub floor_lr: f64,
    pub total_steps: u64,
    pub checkpoint_interval: u64,
    pub grad_clip: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.checkpoint_interval == 0 || self.total_steps % self.checkpoint_interval != 0 {
            return Err(Error::Config(format!(
                "checkpoint interval {} must divide total steps {}",
                self.checkpoint_interval, self.total_steps
            )));
        }
        if self.peak_lr <= 0.0 || self.floor_lr <= 0.0 || self.grad_clip <= 0.0 {
            return Err(Error::Config("all rates must be positive".into()));
        }
        if self.total_steps == 0 || self.batch_tokens == 0 {
            return Err(Error::Config("steps and batch size must be positive".into()));
        }
        Ok(())
    }

    fn lr_at(&self, step: u64) -> f64 {
        if step <= self.warmup_steps {
            return self.peak_lr * step as f64 / self.warmup_steps.max(1) as f64;
        }
        let span = (self.total_steps - self.warmup_steps).max(1) as f64;
        let progress = (step - self.warmup_steps) as f64 / span;
        self.floor_lr
            + 0.5 * (self.peak_lr - self.floor_lr) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub step: u64,
    pub weights_path: PathBuf,
    pub running_loss: f64,
}

#[derive(Debug)]
pub struct TrainReport {
    pub checkpoints: Vec<Checkpoint>,
    /// (step, batch loss) for every step executed in this invocation.
    pub loss_log: Vec<(u64, f64)>,
    pub final_weights: ModelWeights,
}

/// Concatenate documents with a separator token and cut into full-length
/// sequences; a trailing partial sequence is dropped.
pub fn pack_sequences(docs: &[Vec<u32>], separator: u32, seq_len: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur: Vec<u32> = Vec::with_capacity(seq_len);
    let push = |cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>, t: u32| {
        cur.push(t);
        if cur.len() == seq_len {
            out.push(std::mem::replace(cur, Vec::with_capacity(seq_len)));
        }
    };
    for doc in docs {
        push(&mut cur, &mut out, separator);
        for &t in doc {
            push(&mut cur, &mut out, t);
        }
    }
    out
}

/// Train from scratch (or resume from a checkpoint step) on pre-packed
/// sequences. Checkpoints land in `out_dir` as `ckpt_<step>.ilw` with an
/// optimizer sidecar; the loss log is written as CSV alongside.
pub fn train(
    config: &TrainConfig,
    model_config: ModelConfig,
    sequences: &[Vec<u32>],
    out_dir: &Path,
) -> Result<TrainReport> {
    train_with_resume(config, model_config, sequences, out_dir, None)
}

pub fn train_with_resume(
    config: &TrainConfig,
    model_config: ModelConfig,
    sequences: &[Vec<u32>],
    out_dir: &Path,
    resume_from: Option<u64>,
) -> Result<TrainReport> {
    config.validate()?;
    model_config.validate()?;
    if sequences.is_empty() {
        return Err(Error::Input("no training sequences".into()));
    }
    let seq_len = model_config.max_seq_len;
    if sequences.iter().any(|s| s.len() > seq_len) {
        return Err(Error::Input(format!(
            "a sequence exceeds max_seq_len {seq_len}"
        )));
    }
    let n_seqs_per_batch = config.batch_tokens / seq_len;
    if n_seqs_per_batch == 0 {
        return Err(Error::Config(format!(
            "batch_tokens {} smaller than sequence length {seq_len}",
            config.batch_tokens
        )));
    }
    std::fs::create_dir_all(out_dir)?;

    let start_step;
    let mut weights;
    let mut m;
    let mut v;
    match resume_from {
        None => {
            start_step = 0;
            weights =
                EngineWeights::<f32>::from_model(&ModelWeights::random(model_config, config.seed)?);
            m = ParamSet::<f32>::zeros(&model_config);
            v = ParamSet::<f32>::zeros(&model_config);
            save_checkpoint(out_dir, 0, &weights, &m, &v)?;
        }
        Some(step) => {
            start_step = step;
            let w = container::load_model(&ckpt_path(out_dir, step))?;
            if w.config != model_config {
                return Err(Error::Config(
                    "resume checkpoint config differs from requested model config".into(),
                ));
            }
            weights = EngineWeights::<f32>::from_model(&w);
            let (lm, lv) = load_opt_state(&opt_path(out_dir, step), &model_config)?;
            m = lm;
            v = lv;
        }
    }

    let mut loss_log: Vec<(u64, f64)> = Vec::new();
    let mut checkpoints: Vec<Checkpoint> = Vec::new();
    if start_step == 0 {
        checkpoints.push(Checkpoint {
            step: 0,
            weights_path: ckpt_path(out_dir, 0),
            running_loss: f64::NAN,
        });
    }
    let mut last_good: Option<u64> = (start_step > 0 || !checkpoints.is_empty())
        .then_some(start_step);

    let mut grad_acc = ParamSet::<f32>::zeros(&model_config);
    let mut seq_grads: Vec<ParamSet<f32>> = (0..n_seqs_per_batch)
        .map(|_| ParamSet::<f32>::zeros(&model_config))
        .collect();
    for step in start_step + 1..=config.total_steps {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        rng.set_stream(0x5445_0000_0000 + step);
        let batch: Vec<&Vec<u32>> = (0..n_seqs_per_batch)
            .map(|_| &sequences[rng.gen_range(0..sequences.len())])
            .collect();

        let losses: Vec<f64> = batch
            .par_iter()
            .zip(seq_grads.par_iter_mut())
            .map(|(seq, grads)| {
                zero(grads);
                let cache = engine::forward(&weights, seq, false).expect("validated input");
                engine::backward(&weights, &cache, seq, grads)
            })
            .collect();

        // fixed-order reduction keeps results thread-count independent
        let mut loss = 0.0f64;
        zero(&mut grad_acc);
        for (l, g) in losses.iter().zip(&seq_grads) {
            loss += l;
            add_scaled(&mut grad_acc, g, 1.0);
        }
        loss /= n_seqs_per_batch as f64;
        let inv = 1.0 / n_seqs_per_batch as f32;
        scale(&mut grad_acc, inv);

        if !loss.is_finite() {
            let _ = write_loss_log(out_dir, &loss_log);
            return Err(Error::Diverged {
                step,
                last_checkpoint: last_good.map(|s| ckpt_path(out_dir, s)),
            });
        }

        clip_global_norm(&mut grad_acc, config.grad_clip);
        adam_step(&mut weights.p, &grad_acc, &mut m, &mut v, step, config.lr_at(step));
        loss_log.push((step, loss));

        if step % config.checkpoint_interval == 0 {
            save_checkpoint(out_dir, step, &weights, &m, &v)?;
            write_loss_log(out_dir, &loss_log)?;
            checkpoints.push(Checkpoint {
                step,
                weights_path: ckpt_path(out_dir, step),
                running_loss: loss,
            });
            last_good = Some(step);
        }
    }
    write_loss_log(out_dir, &loss_log)?;
    Ok(TrainReport {
        checkpoints,
        loss_log,
        final_weights: weights.to_model(),
    })
}

pub fn ckpt_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(format!("ckpt_{step}.ilw"))
}

fn opt_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(format!("ckpt_{step}.opt.ilw"))
}

fn save_checkpoint(
    out_dir: &Path,
    step: u64,
    weights: &EngineWeights<f32>,
    m: &ParamSet<f32>,
    v: &ParamSet<f32>,
) -> Result<()> {
    let w = weights.to_model();
    container::save_model(&w, &ckpt_path(out_dir, step))?;
    // moments share the model's tensor layout; reuse its naming
    let mw = EngineWeights {
        cfg: weights.cfg,
        p: m.clone(),
    }
    .to_model();
    let vw = EngineWeights {
        cfg: weights.cfg,
        p: v.clone(),
    }
    .to_model();
    let mut tensors: Vec<(String, crate::tensor::TensorF32)> = Vec::new();
    for (name, t) in mw.tensor_entries() {
        tensors.push((format!("m.{name}"), t.clone()));
    }
    for (name, t) in vw.tensor_entries() {
        tensors.push((format!("v.{name}"), t.clone()));
    }
    container::write_container(
        &opt_path(out_dir, step),
        &container::Container {
            kind: "optimizer".into(),
            meta: serde_json::json!({ "step": step, "config": weights.cfg }),
            tensors,
        },
    )
}

fn load_opt_state(path: &Path, cfg: &ModelConfig) -> Result<(ParamSet<f32>, ParamSet<f32>)> {
    let c = container::read_container(path)?;
    if c.kind != "optimizer" {
        return Err(Error::Corruption(format!(
            "expected optimizer container, found {:?}",
            c.kind
        )));
    }
    let mut mw = ModelWeights::zeros(*cfg)?;
    let mut vw = ModelWeights::zeros(*cfg)?;
    for (name, tensor) in c.tensors {
        let (target, rest) = if let Some(r) = name.strip_prefix("m.") {
            (&mut mw, r)
        } else if let Some(r) = name.strip_prefix("v.") {
            (&mut vw, r)
        } else {
            return Err(Error::Corruption(format!("unexpected tensor {name:?}")));
        };
        let slot = target
            .tensor_slot(rest)
            .ok_or_else(|| Error::Corruption(format!("unknown tensor {name:?}")))?;
        *slot = tensor;
    }
    Ok((
        EngineWeights::<f32>::from_model(&mw).p,
        EngineWeights::<f32>::from_model(&vw).p,
    ))
}

fn write_loss_log(out_dir: &Path, log: &[(u64, f64)]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(out_dir.join("loss_log.csv"))?);
    writeln!(f, "# induction-lens v{} schema=loss-log-v1", crate::VERSION)?;
    writeln!(f, "step,loss")?;
    for (step, loss) in log {
        writeln!(f, "{step},{loss}")?;
    }
    f.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// parameter-set arithmetic
// ---------------------------------------------------------------------------

fn zero(p: &mut ParamSet<f32>) {
    for t in p.tensors_mut() {
        t.iter_mut().for_each(|x| *x = 0.0);
    }
}

fn add_scaled(acc: &mut ParamSet<f32>, other: &ParamSet<f32>, k: f32) {
    for (t, o) in acc.tensors_mut().into_iter().zip(other.tensors()) {
        for (a, b) in t.iter_mut().zip(o.iter()) {
            *a += k * b;
        }
    }
}

fn scale(p: &mut ParamSet<f32>, k: f32) {
    for t in p.tensors_mut() {
        t.iter_mut().for_each(|x| *x *= k);
    }
}

fn clip_global_norm(g: &mut ParamSet<f32>, max_norm: f64) {
    let mut sumsq = 0.0f64;
    for t in g.tensors() {
        for &x in t {
            sumsq += f64::from(x) * f64::from(x);
        }
    }
    let norm = sumsq.sqrt();
    if norm > max_norm {
        scale(g, (max_norm / norm) as f32);
    }
}

fn adam_step(
    w: &mut ParamSet<f32>,
    g: &ParamSet<f32>,
    m: &mut ParamSet<f32>,
    v: &mut ParamSet<f32>,
    step: u64,
    lr: f64,
) {
    let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
    for (((wt, gt), mt), vt) in w
        .tensors_mut()
        .into_iter()
        .zip(g.tensors())
        .zip(m.tensors_mut())
        .zip(v.tensors_mut())
    {
        for j in 0..wt.len() {
            let grad = f64::from(gt[j]);
            let m_new = ADAM_BETA1 * f64::from(mt[j]) + (1.0 - ADAM_BETA1) * grad;
            let v_new = ADAM_BETA2 * f64::from(vt[j]) + (1.0 - ADAM_BETA2) * grad * grad;
            mt[j] = m_new as f32;
            vt[j] = v_new as f32;
            let m_hat = f64::from(mt[j]) / bc1;
            let v_hat = f64::from(vt[j]) / bc2;
            wt[j] = (f64::from(wt[j]) - lr * m_hat / (v_hat.sqrt() + ADAM_EPS)) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            n_layers: 1,
            n_heads: 2,
            d_model: 16,
            d_head: 8,
            vocab_size: 12,
            max_seq_len: 8,
            variant: Variant::Full,
        }
    }

    fn tiny_train_cfg(total: u64, interval: u64) -> TrainConfig {
        TrainConfig {
            seed: 42,
            batch_tokens: 16,
            warmup_steps: 2,
            peak_lr: 3e-3,
            floor_lr: 3e-4,
            total_steps: total,
            checkpoint_interval: interval,
            grad_clip: 1.0,
        }
    }

    fn tiny_seqs() -> Vec<Vec<u32>> {
        vec![
            vec![0, 3, 5, 3, 5, 3, 5, 3],
            vec![0, 7, 2, 7, 2, 7, 2, 7],
            vec![0, 1, 4, 9, 1, 4, 9, 1],
        ]
    }

    #[test]
    fn one_step_lowers_repeated_sequence_loss() {
        let dir = tempfile::tempdir().unwrap();
        let seqs = vec![vec![0u32, 3, 5, 3, 5, 3, 5, 3]];
        let cfg = TrainConfig {
            total_steps: 1,
            checkpoint_interval: 1,
            ..tiny_train_cfg(1, 1)
        };
        let report = train(&cfg, tiny_cfg(), &seqs, dir.path()).unwrap();
        let before = container::load_model(&ckpt_path(dir.path(), 0)).unwrap();
        let l0 = crate::model::token_losses(&before, &seqs[0])
            .unwrap()
            .iter()
            .sum::<f64>();
        let l1 = crate::model::token_losses(&report.final_weights, &seqs[0])
            .unwrap()
            .iter()
            .sum::<f64>();
        assert!(l1 < l0, "loss {l0} -> {l1}");
    }

    #[test]
    fn fixed_seed_gives_identical_loss_logs() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let cfg = tiny_train_cfg(6, 3);
        let a = train(&cfg, tiny_cfg(), &tiny_seqs(), d1.path()).unwrap();
        let b = train(&cfg, tiny_cfg(), &tiny_seqs(), d2.path()).unwrap();
        assert_eq!(a.loss_log, b.loss_log);
        assert_eq!(a.final_weights, b.final_weights);
    }

    #[test]
    fn resume_reproduces_uninterrupted_run_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_train_cfg(10, 5);
        let full = train(&cfg, tiny_cfg(), &tiny_seqs(), dir.path()).unwrap();
        // redo steps 6..=10 from the mid-run checkpoint
        let resumed =
            train_with_resume(&cfg, tiny_cfg(), &tiny_seqs(), dir.path(), Some(5)).unwrap();
        assert_eq!(&full.loss_log[5..], &resumed.loss_log[..]);
        assert_eq!(full.final_weights, resumed.final_weights);
    }

    #[test]
    fn checkpoints_land_on_interval_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_train_cfg(6, 2);
        let report = train(&cfg, tiny_cfg(), &tiny_seqs(), dir.path()).unwrap();
        let steps: Vec<u64> = report.checkpoints.iter().map(|c| c.step).collect();
        assert_eq!(steps, vec![0, 2, 4, 6]);
        for c in &report.checkpoints {
            let w = container::load_model(&c.weights_path).unwrap();
            assert_eq!(w.config, tiny_cfg());
        }
    }

    #[test]
    fn interval_must_divide_total() {
        let cfg = tiny_train_cfg(7, 2);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn pack_sequences_shapes() {
        let docs = vec![vec![1u32, 2, 3], vec![4, 5, 6, 7, 8]];
        let packed = pack_sequences(&docs, 0, 4);
        assert_eq!(packed, vec![vec![0, 1, 2, 3], vec![0, 4, 5, 6]]);
    }

    #[test]
    fn pack_sequences_boundary_on_separator() {
        // a separator landing exactly on the sequence boundary must still
        // emit the sequence; nothing after it may be silently dropped
        let docs = vec![vec![1u32, 2, 3], vec![4, 5, 6, 7], vec![8, 9, 10]];
        let packed = pack_sequences(&docs, 0, 4);
        assert_eq!(
            packed,
            vec![vec![0, 1, 2, 3], vec![0, 4, 5, 6], vec![7, 0, 8, 9]]
        );
        // total emitted tokens = floor(total/4)*4
        let total: usize = docs.iter().map(|d| d.len() + 1).sum();
        assert_eq!(packed.len(), total / 4);
    }

    #[test]
    fn lr_schedule_shape() {
        let cfg = tiny_train_cfg(100, 100);
        assert!(cfg.lr_at(1) < cfg.peak_lr);
        assert!((cfg.lr_at(2) - cfg.peak_lr).abs() < 1e-12);
        assert!(cfg.lr_at(100) >= cfg.floor_lr * 0.999);
        assert!(cfg.lr_at(50) < cfg.peak_lr && cfg.lr_at(50) > cfg.floor_lr);
    }
}
