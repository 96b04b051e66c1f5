use alloc::vec::Vec;

use super::Matrix;
use crate::{Error, Result};

pub const DEFAULT_LN_EPS: f32 = 1e-12;

const GELU_C: f32 = 0.797_884_6; // sqrt(2 / pi)
const GELU_A: f32 = 0.044_715;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f32]) {
    if row.is_empty() {
        return;
    }
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in row.iter_mut() {
        *v = libm::expf(*v - max);
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Softmax over the entries of `row` where `allowed` is true; the rest are
/// set to zero. A row with nothing allowed becomes all zeros.
pub(crate) fn masked_softmax_in_place(row: &mut [f32], allowed: impl Fn(usize) -> bool) {
    let mut max = f32::NEG_INFINITY;
    for (j, &v) in row.iter().enumerate() {
        if allowed(j) && v > max {
            max = v;
        }
    }
    if max == f32::NEG_INFINITY {
        row.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut sum = 0.0f32;
    for (j, v) in row.iter_mut().enumerate() {
        if allowed(j) {
            *v = libm::expf(*v - max);
            sum += *v;
        } else {
            *v = 0.0;
        }
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Per-row LayerNorm: `(h - mean) / sqrt(var + eps) * gain + bias`.
pub fn layer_norm(h: &Matrix, gain: &[f32], bias: &[f32], eps: f32) -> Result<Matrix> {
    check_len("layer_norm", h.cols(), gain.len())?;
    check_len("layer_norm", h.cols(), bias.len())?;
    let mut out = Matrix::zeros(h.rows(), h.cols());
    for r in 0..h.rows() {
        normalize_row(h.row(r), gain, bias, eps, out.row_mut(r));
    }
    Ok(out)
}

/// Normalizes one row into `out` and returns `1 / sigma`.
pub(crate) fn normalize_row(x: &[f32], gain: &[f32], bias: &[f32], eps: f32, out: &mut [f32]) -> f32 {
    let n = x.len() as f32;
    let mean = x.iter().sum::<f32>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
    let inv_std = 1.0 / libm::sqrtf(var + eps);
    for (((o, &v), &g), &b) in out.iter_mut().zip(x).zip(gain).zip(bias) {
        *o = (v - mean) * inv_std * g + b;
    }
    inv_std
}

/// Backward of one normalized row.
///
/// `xhat` is the normalized (pre-gain) row, `dy` the upstream gradient.
/// Accumulates into `dgain`/`dbias` when given and writes `dx`.
pub(crate) fn normalize_row_backward(
    xhat: &[f32],
    inv_std: f32,
    gain: &[f32],
    dy: &[f32],
    dx: &mut [f32],
    dgain: Option<&mut [f32]>,
    dbias: Option<&mut [f32]>,
) {
    let n = xhat.len() as f32;
    if let Some(dg) = dgain {
        for ((g, &d), &xh) in dg.iter_mut().zip(dy).zip(xhat) {
            *g += d * xh;
        }
    }
    if let Some(db) = dbias {
        for (b, &d) in db.iter_mut().zip(dy) {
            *b += d;
        }
    }
    let mut mean_dxhat = 0.0f32;
    let mut mean_dxhat_xhat = 0.0f32;
    for ((&d, &g), &xh) in dy.iter().zip(gain).zip(xhat) {
        let dxh = d * g;
        mean_dxhat += dxh;
        mean_dxhat_xhat += dxh * xh;
    }
    mean_dxhat /= n;
    mean_dxhat_xhat /= n;
    for (((o, &d), &g), &xh) in dx.iter_mut().zip(dy).zip(gain).zip(xhat) {
        *o = inv_std * (d * g - mean_dxhat - xh * mean_dxhat_xhat);
    }
}

#[inline]
pub fn gelu_scalar(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::tanhf(GELU_C * (x + GELU_A * x * x * x)))
}

#[inline]
pub fn gelu_grad_scalar(x: f32) -> f32 {
    let t = libm::tanhf(GELU_C * (x + GELU_A * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Elementwise GELU, tanh approximation.
pub fn gelu(m: &Matrix) -> Matrix {
    let data: Vec<f32> = m.as_slice().iter().map(|&x| gelu_scalar(x)).collect();
    Matrix::from_vec(m.rows(), m.cols(), data).expect("same shape")
}

fn check_len(op: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            op,
            expected,
            found,
        })
    }
}
