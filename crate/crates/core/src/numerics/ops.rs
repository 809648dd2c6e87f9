//! Differentiable primitives with hand-written backward passes.

use super::Matrix;
use crate::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Numerically stable softmax of one slice, written into `out`.
pub fn softmax_into(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    softmax_into(x, &mut out);
    out
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        softmax_into(m.row(i), out.row_mut(i));
    }
    out
}

/// Gradient through a row-wise softmax: `dS = A ⊙ (dA − rowsum(dA ⊙ A))`.
pub fn softmax_rows_backward(probs: &Matrix, grad_out: &Matrix) -> Matrix {
    let mut grad = Matrix::zeros(probs.rows(), probs.cols());
    for i in 0..probs.rows() {
        let a = probs.row(i);
        let g = grad_out.row(i);
        let inner: f64 = a.iter().zip(g).map(|(x, y)| x * y).sum();
        for ((d, &ai), &gi) in grad.row_mut(i).iter_mut().zip(a).zip(g) {
            *d = ai * (gi - inner);
        }
    }
    grad
}

/// `(x − mean) / sqrt(var + eps) · gain + bias`, population variance.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Result<Vec<f64>> {
    if gain.len() != x.len() || bias.len() != x.len() {
        return Err(Error::shape(
            "layer_norm",
            x.len(),
            format!("gain {} / bias {}", gain.len(), bias.len()),
        ));
    }
    let (xhat, _) = normalize(x, eps);
    Ok(xhat
        .iter()
        .zip(gain)
        .zip(bias)
        .map(|((h, g), b)| h * g + b)
        .collect())
}

fn normalize(x: &[f64], eps: f64) -> (Vec<f64>, f64) {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv_std = 1.0 / (var + eps).sqrt();
    (x.iter().map(|v| (v - mean) * inv_std).collect(), inv_std)
}

/// Cached forward state of a row-wise LayerNorm.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub xhat: Matrix,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm_rows(x: &Matrix, gain: &[f64], bias: &[f64], eps: f64) -> (Matrix, LayerNormCache) {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    let mut xhat = Matrix::zeros(x.rows(), x.cols());
    let mut inv_std = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let (h, s) = normalize(x.row(i), eps);
        for (j, hv) in h.iter().enumerate() {
            out[(i, j)] = hv * gain[j] + bias[j];
        }
        xhat.row_mut(i).copy_from_slice(&h);
        inv_std.push(s);
    }
    (out, LayerNormCache { xhat, inv_std })
}

/// Returns `(dx, dgain, dbias)`.
pub fn layer_norm_rows_backward(
    cache: &LayerNormCache,
    gain: &[f64],
    grad_out: &Matrix,
) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (rows, cols) = grad_out.shape();
    let d = cols as f64;
    let mut dx = Matrix::zeros(rows, cols);
    let mut dgain = vec![0.0; cols];
    let mut dbias = vec![0.0; cols];
    for i in 0..rows {
        let dy = grad_out.row(i);
        let xhat = cache.xhat.row(i);
        let dxhat: Vec<f64> = dy.iter().zip(gain).map(|(a, g)| a * g).collect();
        let mean_dxhat = dxhat.iter().sum::<f64>() / d;
        let mean_dxhat_xhat = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / d;
        let s = cache.inv_std[i];
        for j in 0..cols {
            dx[(i, j)] = s * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
            dgain[j] += dy[j] * xhat[j];
            dbias[j] += dy[j];
        }
    }
    (dx, dgain, dbias)
}

pub fn relu(m: &Matrix) -> Matrix {
    m.map(|v| v.max(0.0))
}

/// Passes the gradient where the pre-activation was positive.
pub fn relu_backward(pre: &Matrix, grad_out: &Matrix) -> Matrix {
    let mut g = grad_out.clone();
    for (gv, &p) in g.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if p <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

/// `x · w + b` for a row-batch `x`.
pub fn linear(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    let mut out = x.matmul(w)?;
    out.add_row_broadcast(b)?;
    Ok(out)
}

/// Inverted-dropout mask: entries are `0` or `1 / keep`.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut super::Rng) -> Matrix {
    let keep = 1.0 - rate;
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        if rng.bernoulli(keep) {
            *v = 1.0 / keep;
        }
    }
    m
}

pub fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = a.clone();
    for (o, v) in out.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *o *= v;
    }
    out
}
