//! Forward kernels shared by the pure tensor API and the autograd graph.
//!
//! Every function here is a pure function of its inputs. Sums run in a fixed
//! order so results are bit-reproducible for identical inputs.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// `c = a·b` (optionally with either operand transposed) accumulated into `c`
/// scaled by `beta`. Dimensions are those of the logical (post-transpose) operands.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths are checked above and the strides describe
    // in-bounds row-major (or transposed row-major) layouts of those slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Standard matrix product of `a[m×k]` and `b[k×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    matmul_t(a, false, b, false)
}

/// Matrix product with optional transposition of either operand.
pub fn matmul_t(a: &Tensor, a_trans: bool, b: &Tensor, b_trans: bool) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let (ar, ac) = a.dims2();
    let (br, bc) = b.dims2();
    let (m, k) = if a_trans { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if b_trans { (bc, br) } else { (br, bc) };
    if k != k2 {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), a_trans, b.data(), b_trans, 0.0, &mut out);
    Tensor::new(&[m, n], out)
}

pub fn transpose(a: &Tensor) -> Tensor {
    let (r, c) = a.dims2();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a.data()[i * c + j];
        }
    }
    Tensor::new(&[c, r], out).expect("transpose keeps numel")
}

/// Row-wise softmax with an optional additive mask.
///
/// Mask entries are `0.0` for visible columns and `f64::NEG_INFINITY` for hidden
/// ones. A row with no visible column comes back as all zeros.
pub fn softmax_rows(scores: &Tensor, additive_mask: Option<&Tensor>) -> Result<Tensor> {
    if let Some(mask) = additive_mask {
        if mask.shape() != scores.shape() {
            return Err(Error::shape("softmax_rows", scores.shape(), mask.shape()));
        }
    }
    let (rows, cols) = scores.dims2();
    let mut out = vec![0.0; rows * cols];
    let mut shifted = vec![0.0; cols];
    for i in 0..rows {
        let row = scores.row(i);
        for (j, s) in shifted.iter_mut().enumerate() {
            *s = row[j] + additive_mask.map_or(0.0, |m| m.data()[i * cols + j]);
        }
        softmax_slice(&shifted, &mut out[i * cols..(i + 1) * cols]);
    }
    Tensor::new(scores.shape(), out)
}

/// Softmax of one row into `out`; non-finite (masked) inputs get probability 0.
pub(crate) fn softmax_slice(row: &[f64], out: &mut [f64]) {
    let max = row
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        out.fill(0.0);
        return;
    }
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = if v.is_finite() { (v - max).exp() } else { 0.0 };
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Per-row normalization statistics kept for the backward pass.
pub(crate) struct LayerNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    layer_norm_cached(x, gamma, beta, eps).map(|(t, _)| t)
}

pub(crate) fn layer_norm_cached(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, LayerNormCache)> {
    let (rows, d) = x.dims2();
    if gamma.numel() != d {
        return Err(Error::shape("layer_norm", x.shape(), gamma.shape()));
    }
    if beta.numel() != d {
        return Err(Error::shape("layer_norm", x.shape(), beta.shape()));
    }
    let mut out = vec![0.0; rows * d];
    let mut normalized = vec![0.0; rows * d];
    let mut inv_std = vec![0.0; rows];
    for i in 0..rows {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        inv_std[i] = inv;
        for j in 0..d {
            let n = (row[j] - mean) * inv;
            normalized[i * d + j] = n;
            out[i * d + j] = n * gamma.data()[j] + beta.data()[j];
        }
    }
    Ok((
        Tensor::new(x.shape(), out)?,
        LayerNormCache {
            normalized,
            inv_std,
        },
    ))
}

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Exact GELU, `x·Φ(x)`.
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2))
}

pub(crate) fn gelu_grad_scalar(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * INV_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

pub fn gelu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| gelu_scalar(v)).collect();
    Tensor::new(x.shape(), data).expect("same shape")
}

/// Mean negative log-likelihood of `targets[p]` under `softmax(logits[p])` over
/// `predict_positions`. An empty position set yields 0.
pub fn cross_entropy_masked(
    logits: &Tensor,
    targets: &[usize],
    predict_positions: &[usize],
) -> Result<f64> {
    let (rows, vocab) = logits.dims2();
    let mut pairs = Vec::with_capacity(predict_positions.len());
    for &p in predict_positions {
        if p >= rows {
            return Err(Error::Index {
                what: "logit rows",
                index: p,
                size: rows,
            });
        }
        let t = *targets.get(p).ok_or(Error::Index {
            what: "targets",
            index: p,
            size: targets.len(),
        })?;
        if t >= vocab {
            return Err(Error::Index {
                what: "vocabulary",
                index: t,
                size: vocab,
            });
        }
        pairs.push((p, t));
    }
    Ok(nll_rows(logits, &pairs, None).0)
}

/// Mean NLL over `(row, target)` pairs plus the softmax rows needed for the
/// gradient. Callers validate indices.
pub(crate) fn nll_rows(
    logits: &Tensor,
    pairs: &[(usize, usize)],
    column_mask: Option<&[f64]>,
) -> (f64, Vec<Vec<f64>>) {
    if pairs.is_empty() {
        return (0.0, Vec::new());
    }
    let cols = logits.cols();
    let mut probs = Vec::with_capacity(pairs.len());
    let mut total = 0.0;
    let mut shifted = vec![0.0; cols];
    for &(r, t) in pairs {
        let row = logits.row(r);
        for j in 0..cols {
            shifted[j] = row[j] + column_mask.map_or(0.0, |m| m[j]);
        }
        let max = shifted
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let log_z = max
            + shifted
                .iter()
                .filter(|v| v.is_finite())
                .map(|v| (v - max).exp())
                .sum::<f64>()
                .ln();
        total += log_z - shifted[t];
        let mut p = vec![0.0; cols];
        softmax_slice(&shifted, &mut p);
        probs.push(p);
    }
    (total / pairs.len() as f64, probs)
}
