//! Gradient correctness oracle: analytic reverse-mode gradients against
//! central finite differences, both evaluated with the f64 instantiation
//! of the same engine code that training runs at f32.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::model::engine::{self, EngineWeights, ParamSet};
use crate::model::ModelWeights;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

const SAMPLE_TARGET: usize = 256;
/// Gradients below this magnitude are compared with an absolute floor in
/// the denominator so finite-difference noise does not inflate the ratio.
const DENOM_FLOOR: f64 = 1e-6;

/// Compare analytic gradients against central finite differences on a
/// random subset of parameters. Restricted to tiny models (d <= 32).
pub fn grad_check(weights: &ModelWeights, batch: &[Vec<u32>], epsilon: f64) -> Result<GradCheckReport> {
    let pairs = grad_check_pairs(weights, batch, epsilon, 0xC0FFEE)?;
    Ok(report_from_pairs(&pairs))
}

pub(crate) fn report_from_pairs(pairs: &[(f64, f64)]) -> GradCheckReport {
    let max_rel_err = pairs
        .iter()
        .map(|&(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(DENOM_FLOOR))
        .fold(0.0f64, f64::max);
    GradCheckReport {
        max_rel_err,
        checked: pairs.len(),
    }
}

/// (analytic, finite-difference) gradient pairs for the sampled parameters.
pub(crate) fn grad_check_pairs(
    weights: &ModelWeights,
    batch: &[Vec<u32>],
    epsilon: f64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if weights.config.d_model > 32 {
        return Err(Error::Input(format!(
            "grad_check is for tiny models (d <= 32), got d = {}",
            weights.config.d_model
        )));
    }
    if batch.is_empty() {
        return Err(Error::Input("empty gradient-check batch".into()));
    }
    if epsilon <= 0.0 {
        return Err(Error::Input("epsilon must be positive".into()));
    }
    let mut ew = EngineWeights::<f64>::from_model(weights);
    let cfg = ew.cfg;

    // analytic gradient of the batch-mean loss
    let mut analytic = ParamSet::<f64>::zeros(&cfg);
    for seq in batch {
        let cache = engine::forward(&ew, seq, false)?;
        engine::backward(&ew, &cache, seq, &mut analytic);
    }
    let inv_b = 1.0 / batch.len() as f64;
    for t in analytic.tensors_mut() {
        t.iter_mut().for_each(|x| *x *= inv_b);
    }

    let sizes: Vec<usize> = ew.p.tensors().iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let n_check = SAMPLE_TARGET.min(total);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = (0..n_check)
        .map(|_| rng.gen_range(0..total))
        .collect();
    picked.sort_unstable();
    picked.dedup();

    let mut pairs = Vec::with_capacity(picked.len());
    for flat in picked {
        let a = read_param(&analytic, &sizes, flat);
        let orig = read_param(&ew.p, &sizes, flat);
        write_param(&mut ew.p, &sizes, flat, orig + epsilon);
        let up = batch_loss(&ew, batch)?;
        write_param(&mut ew.p, &sizes, flat, orig - epsilon);
        let down = batch_loss(&ew, batch)?;
        write_param(&mut ew.p, &sizes, flat, orig);
        let numeric = (up - down) / (2.0 * epsilon);
        pairs.push((a, numeric));
    }
    Ok(pairs)
}

fn batch_loss(ew: &EngineWeights<f64>, batch: &[Vec<u32>]) -> Result<f64> {
    let mut acc = 0.0;
    for seq in batch {
        let cache = engine::forward(ew, seq, false)?;
        acc += engine::mean_loss(&ew.cfg, &cache, seq);
    }
    Ok(acc / batch.len() as f64)
}

fn locate(sizes: &[usize], flat: usize) -> (usize, usize) {
    let mut rem = flat;
    for (i, &s) in sizes.iter().enumerate() {
        if rem < s {
            return (i, rem);
        }
        rem -= s;
    }
    unreachable!("flat index out of range")
}

fn read_param(p: &ParamSet<f64>, sizes: &[usize], flat: usize) -> f64 {
    let (t, off) = locate(sizes, flat);
    p.tensors()[t][off]
}

fn write_param(p: &mut ParamSet<f64>, sizes: &[usize], flat: usize, value: f64) {
    let (t, off) = locate(sizes, flat);
    p.tensors_mut()[t][off] = value;
}
