//! Minimal dense float32 linear algebra used by the rest of the crate.
//!
//! Values are stored row-major in f32; reductions (softmax sums, means)
//! accumulate in f64 so that averages do not drift with summation order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major float32 tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorF32 {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl TensorF32 {
    /// Build a tensor, validating that the buffer matches the shape and is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} implies {} elements, buffer has {}",
                shape,
                n,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value {} at flat index {}",
                data[bad], bad
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Number of rows of a 2-d tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of columns of a 2-d tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    /// Element `(i, j)` of a 2-d tensor.
    pub fn at(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.shape[1] + j]
    }

    /// Row `i` of a 2-d tensor.
    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.shape[1];
        &self.data[i * c..(i + 1) * c]
    }
}

/// `c[m x n] = a[m x k] * b[k x n]`, row-major.
pub fn matmul(a: &TensorF32, b: &TensorF32) -> Result<TensorF32> {
    if !a.is_matrix() || !b.is_matrix() {
        return Err(Error::Shape(format!(
            "matmul needs 2-d operands, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    if k != k2 {
        return Err(Error::Shape(format!(
            "inner dimensions disagree: {m}x{k} vs {k2}x{n}"
        )));
    }
    let mut out = vec![0.0f32; m * n];
    matmul_into(a.data(), b.data(), &mut out, m, k, n);
    if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "matmul produced non-finite value at flat index {bad}"
        )));
    }
    TensorF32::new(vec![m, n], out)
}

/// Unchecked kernel shared with the training engine. `c` must be zeroed by
/// the caller if plain assignment semantics are wanted; this accumulates.
#[inline]
pub(crate) fn matmul_into(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
}

/// Row-wise softmax with optional causal masking.
///
/// Rows are stabilized by max subtraction; sums accumulate in f64. With
/// `causal` set the matrix must be square and entries above the diagonal
/// come out exactly zero.
pub fn masked_softmax_rows(logits: &TensorF32, causal: bool) -> Result<TensorF32> {
    if !logits.is_matrix() {
        return Err(Error::Shape(format!(
            "softmax needs a 2-d tensor, got {:?}",
            logits.shape()
        )));
    }
    if causal && logits.rows() != logits.cols() {
        return Err(Error::Shape(format!(
            "causal softmax needs a square matrix, got {}x{}",
            logits.rows(),
            logits.cols()
        )));
    }
    if logits.data().iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN in softmax input".into()));
    }
    let (n, c) = (logits.rows(), logits.cols());
    let mut out = vec![0.0f32; n * c];
    for i in 0..n {
        let width = if causal { i + 1 } else { c };
        let row = &logits.row(i)[..width];
        softmax_slice(row, &mut out[i * c..i * c + width]);
    }
    TensorF32::new(vec![n, c], out)
}

/// Stabilized softmax of one slice. f64 accumulation, f32 output.
pub(crate) fn softmax_slice(row: &[f32], out: &mut [f32]) {
    let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f64;
    for (o, &v) in out.iter_mut().zip(row) {
        let e = f64::from(v - max).exp();
        *o = e as f32;
        sum += e;
    }
    for o in out.iter_mut() {
        *o = (f64::from(*o) / sum) as f32;
    }
}

/// Argmax over positions `0..=limit` with the runner-up value.
///
/// Ties break toward the smallest index. The runner-up is the maximum over
/// the remaining positions inside the limit, absent when `limit == 0`.
pub fn argmax_with_runnerup(v: &[f32], limit: usize) -> Result<(usize, f32, Option<f32>)> {
    if v.is_empty() {
        return Err(Error::Domain("argmax over empty slice".into()));
    }
    if limit >= v.len() {
        return Err(Error::Domain(format!(
            "limit {} out of range for length {}",
            limit,
            v.len()
        )));
    }
    let mut best = 0usize;
    for (i, &x) in v[..=limit].iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    let runnerup = v[..=limit]
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != best)
        .map(|(_, &x)| x)
        .fold(None, |acc: Option<f32>, x| {
            Some(acc.map_or(x, |a| a.max(x)))
        });
    Ok((best, v[best], runnerup))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, data: Vec<f32>) -> TensorF32 {
        TensorF32::new(shape, data).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let i2 = t(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let m = t(vec![2, 2], vec![3.0, -1.5, 2.0, 0.25]);
        assert_eq!(matmul(&i2, &m).unwrap(), m);
    }

    #[test]
    fn matmul_hand_case() {
        let a = t(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = t(vec![2, 1], vec![0.0, 1.0]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_zero_annihilates() {
        let z = TensorF32::zeros(vec![3, 4]);
        let m = t(vec![4, 2], (0..8).map(|x| x as f32).collect());
        let c = matmul(&z, &m).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_dim_mismatch() {
        let a = TensorF32::zeros(vec![2, 3]);
        let b = TensorF32::zeros(vec![2, 3]);
        assert!(matches!(matmul(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_matches_naive_oracle() {
        // Independent triple-loop oracle on random 32x32 inputs.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let n = 32;
        let a: Vec<f32> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f32> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = matmul(
            &t(vec![n, n], a.clone()),
            &t(vec![n, n], b.clone()),
        )
        .unwrap();
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0f64;
                for p in 0..n {
                    acc += f64::from(a[i * n + p]) * f64::from(b[p * n + j]);
                }
                let got = f64::from(fast.at(i, j));
                let denom = acc.abs().max(1.0);
                assert!(
                    ((got - acc) / denom).abs() < 1e-5,
                    "cell ({i},{j}): {got} vs {acc}"
                );
            }
        }
    }

    #[test]
    fn softmax_causal_uniform_rows() {
        let z = TensorF32::zeros(vec![4, 4]);
        let s = masked_softmax_rows(&z, true).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                let expect = if k <= j { 1.0 / (j as f32 + 1.0) } else { 0.0 };
                assert!((s.at(j, k) - expect).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn softmax_closed_form_row() {
        let row = t(vec![1, 2], vec![0.0, (2.0f32).ln()]);
        let s = masked_softmax_rows(&row, false).unwrap();
        assert!((s.at(0, 0) - 1.0 / 3.0).abs() < 1e-6);
        assert!((s.at(0, 1) - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn softmax_stabilized_no_overflow() {
        let row = t(vec![1, 2], vec![1000.0, 0.0]);
        let s = masked_softmax_rows(&row, false).unwrap();
        assert!((s.at(0, 0) - 1.0).abs() < 1e-6);
        assert!(s.at(0, 1) >= 0.0 && s.at(0, 1) < 1e-6);
    }

    #[test]
    fn softmax_rejects_nan() {
        let mut z = TensorF32::zeros(vec![2, 2]);
        z.data_mut()[1] = f32::NAN;
        assert!(matches!(
            masked_softmax_rows(&z, false),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn softmax_causal_requires_square() {
        let z = TensorF32::zeros(vec![2, 3]);
        assert!(matches!(
            masked_softmax_rows(&z, true),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn argmax_basic() {
        assert_eq!(
            argmax_with_runnerup(&[0.6, 0.2, 0.1], 2).unwrap(),
            (0, 0.6, Some(0.2))
        );
    }

    #[test]
    fn argmax_tie_breaks_low() {
        assert_eq!(
            argmax_with_runnerup(&[0.5, 0.5], 1).unwrap(),
            (0, 0.5, Some(0.5))
        );
    }

    #[test]
    fn argmax_singleton_has_no_runnerup() {
        assert_eq!(argmax_with_runnerup(&[0.3], 0).unwrap(), (0, 0.3, None));
    }

    #[test]
    fn argmax_rejects_empty_and_bad_limit() {
        assert!(matches!(
            argmax_with_runnerup(&[], 0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            argmax_with_runnerup(&[1.0], 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn tensor_rejects_bad_shape_and_nonfinite() {
        assert!(matches!(
            TensorF32::new(vec![2, 2], vec![0.0; 3]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            TensorF32::new(vec![1, 2], vec![0.0, f32::INFINITY]),
            Err(Error::Numeric(_))
        ));
    }
}
