//! Forward/backward primitives over row-major batches.

use crate::math::linalg::{add_row_bias, gemm, Op};
use crate::math::LN_EPS;

/// `y = x·W + b` for `rows × din` input and `din × dout` weight.
pub(crate) fn linear_fwd(
    x: &[f64],
    rows: usize,
    din: usize,
    dout: usize,
    w: &[f64],
    b: Option<&[f64]>,
) -> Vec<f64> {
    let mut y = vec![0.0; rows * dout];
    gemm(rows, din, dout, x, Op::N, w, Op::N, 0.0, &mut y);
    if let Some(b) = b {
        add_row_bias(&mut y, b);
    }
    y
}

/// Accumulates `dW += xᵀ·dy`; returns `dx = dy·Wᵀ` when requested. Bias gradients
/// are column sums of `dy` and are taken separately by the caller.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_bwd(
    x: &[f64],
    dy: &[f64],
    rows: usize,
    din: usize,
    dout: usize,
    w: &[f64],
    gw: &mut [f64],
    want_dx: bool,
) -> Option<Vec<f64>> {
    gemm(din, rows, dout, x, Op::T, dy, Op::N, 1.0, gw);
    want_dx.then(|| {
        let mut dx = vec![0.0; rows * din];
        gemm(rows, dout, din, dy, Op::N, w, Op::T, 0.0, &mut dx);
        dx
    })
}

pub(crate) fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

/// Masks `dy` in place by the sign of the pre-activation.
pub(crate) fn relu_bwd(pre: &[f64], dy: &mut [f64]) {
    for (g, p) in dy.iter_mut().zip(pre) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

pub(crate) fn layer_norm_fwd(
    x: &[f64],
    d: usize,
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<f64>, LnCache) {
    let rows = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = inv;
        for c in 0..d {
            let h = (row[c] - mean) * inv;
            xhat[r * d + c] = h;
            y[r * d + c] = gamma[c] * h + beta[c];
        }
    }
    (y, LnCache { xhat, inv_std })
}

pub(crate) fn layer_norm_bwd(
    cache: &LnCache,
    dy: &[f64],
    d: usize,
    gamma: &[f64],
    ggamma: &mut [f64],
    gbeta: &mut [f64],
) -> Vec<f64> {
    let rows = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    let mut g = vec![0.0; d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut mean_g = 0.0;
        let mut mean_gx = 0.0;
        for c in 0..d {
            ggamma[c] += dyr[c] * xh[c];
            gbeta[c] += dyr[c];
            g[c] = dyr[c] * gamma[c];
            mean_g += g[c];
            mean_gx += g[c] * xh[c];
        }
        mean_g /= d as f64;
        mean_gx /= d as f64;
        let inv = cache.inv_std[r];
        for c in 0..d {
            dx[r * d + c] = inv * (g[c] - mean_g - xh[c] * mean_gx);
        }
    }
    dx
}

/// Shape of a multi-head attention call.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AttnShape {
    pub batch: usize,
    pub seq: usize,
    pub d: usize,
    pub heads: usize,
}

impl AttnShape {
    fn head_dim(&self) -> usize {
        self.d / self.heads
    }
}

/// Scaled dot-product self-attention over packed `qkv` rows (`[q | k | v]`, each `d` wide).
///
/// Returns the concatenated head outputs (`batch·seq × d`) and the attention
/// probabilities (`batch × heads × seq × seq`).
pub(crate) fn attention_fwd(qkv: &[f64], s: AttnShape) -> (Vec<f64>, Vec<f64>) {
    let AttnShape {
        batch,
        seq,
        d,
        heads,
    } = s;
    let hd = s.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let mut out = vec![0.0; batch * seq * d];
    let mut probs = vec![0.0; batch * heads * seq * seq];
    let mut row = vec![0.0; seq];
    for b in 0..batch {
        for h in 0..heads {
            let pbase = (b * heads + h) * seq * seq;
            for i in 0..seq {
                let q = &qkv[(b * seq + i) * 3 * d + h * hd..][..hd];
                for (j, rj) in row.iter_mut().enumerate() {
                    let k = &qkv[(b * seq + j) * 3 * d + d + h * hd..][..hd];
                    *rj = q.iter().zip(k).map(|(x, y)| x * y).sum::<f64>() * scale;
                }
                crate::math::nn::softmax_in_place(&mut row);
                probs[pbase + i * seq..pbase + (i + 1) * seq].copy_from_slice(&row);
                let o = &mut out[(b * seq + i) * d + h * hd..][..hd];
                for (j, a) in row.iter().enumerate() {
                    let v = &qkv[(b * seq + j) * 3 * d + 2 * d + h * hd..][..hd];
                    for (oc, vc) in o.iter_mut().zip(v) {
                        *oc += a * vc;
                    }
                }
            }
        }
    }
    (out, probs)
}

/// Gradient of the packed `qkv` given the gradient of the head outputs.
pub(crate) fn attention_bwd(qkv: &[f64], probs: &[f64], dout: &[f64], s: AttnShape) -> Vec<f64> {
    let AttnShape {
        batch,
        seq,
        d,
        heads,
    } = s;
    let hd = s.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let mut dqkv = vec![0.0; qkv.len()];
    let mut da = vec![0.0; seq];
    for b in 0..batch {
        for h in 0..heads {
            let pbase = (b * heads + h) * seq * seq;
            for i in 0..seq {
                let a = &probs[pbase + i * seq..pbase + (i + 1) * seq];
                let dor = &dout[(b * seq + i) * d + h * hd..][..hd];
                for (j, daj) in da.iter_mut().enumerate() {
                    let v = &qkv[(b * seq + j) * 3 * d + 2 * d + h * hd..][..hd];
                    *daj = dor.iter().zip(v).map(|(x, y)| x * y).sum();
                }
                let dot: f64 = a.iter().zip(&da).map(|(x, y)| x * y).sum();
                for j in 0..seq {
                    let ds = a[j] * (da[j] - dot) * scale;
                    let qi = (b * seq + i) * 3 * d + h * hd;
                    let kj = (b * seq + j) * 3 * d + d + h * hd;
                    let vj = (b * seq + j) * 3 * d + 2 * d + h * hd;
                    for c in 0..hd {
                        dqkv[qi + c] += ds * qkv[kj + c];
                        dqkv[kj + c] += ds * qkv[qi + c];
                        dqkv[vj + c] += a[j] * dor[c];
                    }
                }
            }
        }
    }
    dqkv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{finite_diff_gradient, seeded_rng};

    fn randv(n: usize, seed: u64) -> Vec<f64> {
        let mut r = seeded_rng(seed);
        (0..n).map(|_| r.normal()).collect()
    }

    #[test]
    fn layer_norm_matches_single_vector_op() {
        let x = randv(12, 1);
        let g = randv(4, 2);
        let b = randv(4, 3);
        let (y, _) = layer_norm_fwd(&x, 4, &g, &b);
        for r in 0..3 {
            let want = crate::math::layer_norm(&x[r * 4..r * 4 + 4], &g, &b);
            for c in 0..4 {
                assert!((y[r * 4 + c] - want[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn layer_norm_backward_matches_fd() {
        let d = 5;
        let x = randv(3 * d, 4);
        let g = randv(d, 5);
        let b = randv(d, 6);
        let w = randv(3 * d, 7);
        let f = |xs: &[f64]| -> f64 {
            let (y, _) = layer_norm_fwd(xs, d, &g, &b);
            y.iter().zip(&w).map(|(a, c)| a * c).sum()
        };
        let (_, cache) = layer_norm_fwd(&x, d, &g, &b);
        let mut gg = vec![0.0; d];
        let mut gb = vec![0.0; d];
        let dx = layer_norm_bwd(&cache, &w, d, &g, &mut gg, &mut gb);
        let fd = finite_diff_gradient(f, &x, 1e-6);
        for (a, e) in dx.iter().zip(&fd) {
            assert!((a - e).abs() < 1e-7, "{a} vs {e}");
        }
    }

    #[test]
    fn attention_backward_matches_fd() {
        let s = AttnShape {
            batch: 2,
            seq: 3,
            d: 4,
            heads: 2,
        };
        let qkv = randv(2 * 3 * 12, 8);
        let w = randv(2 * 3 * 4, 9);
        let f = |q: &[f64]| -> f64 {
            let (o, _) = attention_fwd(q, s);
            o.iter().zip(&w).map(|(a, c)| a * c).sum()
        };
        let (_, probs) = attention_fwd(&qkv, s);
        let dq = attention_bwd(&qkv, &probs, &w, s);
        let fd = finite_diff_gradient(f, &qkv, 1e-6);
        for (a, e) in dq.iter().zip(&fd) {
            assert!((a - e).abs() < 1e-7, "{a} vs {e}");
        }
    }

    #[test]
    fn attention_rows_are_distributions() {
        let s = AttnShape {
            batch: 3,
            seq: 2,
            d: 8,
            heads: 4,
        };
        let (_, probs) = attention_fwd(&randv(3 * 2 * 24, 10), s);
        for row in probs.chunks(2) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
