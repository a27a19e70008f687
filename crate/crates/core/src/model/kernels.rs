// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense kernels shared by inference and training: GEMM, layer norm, GELU,
//! causal multi-head attention. All buffers are row-major `f64`.

/// `C = alpha * op(A) * op(B) + beta * C` where `op(A)` is `m x k`, `op(B)`
/// is `k x n` and `C` is `m x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    c: &mut [f64],
    alpha: f64,
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: strides describe in-bounds row-major views of the asserted sizes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
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

/// `Y = X W + b` for `X: rows x din`, `W: din x dout`.
pub fn linear(x: &[f64], rows: usize, din: usize, w: &[f64], bias: &[f64], dout: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(rows * dout);
    for _ in 0..rows {
        y.extend_from_slice(bias);
    }
    gemm(rows, din, dout, x, false, w, false, &mut y, 1.0, 1.0);
    y
}

/// Backward of [`linear`]: accumulates `dW`, `db` and returns `dX`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    x: &[f64],
    dy: &[f64],
    rows: usize,
    din: usize,
    dout: usize,
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    gemm(din, rows, dout, x, true, dy, false, dw, 1.0, 1.0);
    for r in 0..rows {
        for (acc, g) in db.iter_mut().zip(&dy[r * dout..(r + 1) * dout]) {
            *acc += g;
        }
    }
    let mut dx = vec![0.0; rows * din];
    gemm(rows, dout, din, dy, false, w, true, &mut dx, 1.0, 0.0);
    dx
}

/// Normalized rows plus per-row reciprocal std, kept for the backward pass.
pub struct NormCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub fn layer_norm(x: &[f64], rows: usize, d: usize, g: &[f64], b: &[f64], eps: f64) -> (Vec<f64>, NormCache) {
    let mut y = vec![0.0; rows * d];
    let mut xhat = vec![0.0; rows * d];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + eps).sqrt();
        rstd[r] = rs;
        for i in 0..d {
            let h = (row[i] - mean) * rs;
            xhat[r * d + i] = h;
            y[r * d + i] = h * g[i] + b[i];
        }
    }
    (y, NormCache { xhat, rstd })
}

pub fn layer_norm_backward(
    dy: &[f64],
    cache: &NormCache,
    rows: usize,
    d: usize,
    g: &[f64],
    dg: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * d];
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let dyr = &dy[r * d..(r + 1) * d];
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in 0..d {
            dg[i] += dyr[i] * xh[i];
            db[i] += dyr[i];
            dxhat[i] = dyr[i] * g[i];
            m1 += dxhat[i];
            m2 += dxhat[i] * xh[i];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        let rs = cache.rstd[r];
        for i in 0..d {
            dx[r * d + i] = rs * (dxhat[i] - m1 - xh[i] * m2);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

/// Causal multi-head attention over one sequence.
///
/// `qkv` is `n x 3d` (queries, keys, values side by side). Returns the
/// concatenated head outputs (`n x d`) and the attention probabilities
/// (`heads x n x n`, zero above the diagonal).
pub fn causal_attention(qkv: &[f64], n: usize, d: usize, heads: usize) -> (Vec<f64>, Vec<f64>) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let stride = 3 * d;
    let mut out = vec![0.0; n * d];
    let mut probs = vec![0.0; heads * n * n];
    for h in 0..heads {
        let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
        for i in 0..n {
            let q = &qkv[i * stride + qo..i * stride + qo + dh];
            let p = &mut probs[(h * n + i) * n..(h * n + i + 1) * n];
            let mut max = f64::NEG_INFINITY;
            for j in 0..=i {
                let k = &qkv[j * stride + ko..j * stride + ko + dh];
                let s = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                p[j] = s;
                max = max.max(s);
            }
            let mut z = 0.0;
            for pj in p.iter_mut().take(i + 1) {
                *pj = (*pj - max).exp();
                z += *pj;
            }
            let o = &mut out[i * d + h * dh..i * d + (h + 1) * dh];
            for j in 0..=i {
                p[j] /= z;
                let v = &qkv[j * stride + vo..j * stride + vo + dh];
                for (oo, vv) in o.iter_mut().zip(v) {
                    *oo += p[j] * vv;
                }
            }
        }
    }
    (out, probs)
}

/// Backward of [`causal_attention`]: returns `d(qkv)`.
pub fn causal_attention_backward(
    dout: &[f64],
    qkv: &[f64],
    probs: &[f64],
    n: usize,
    d: usize,
    heads: usize,
) -> Vec<f64> {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let stride = 3 * d;
    let mut dqkv = vec![0.0; n * stride];
    let mut dp = vec![0.0; n];
    for h in 0..heads {
        let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
        for i in 0..n {
            let p = &probs[(h * n + i) * n..(h * n + i + 1) * n];
            let go = &dout[i * d + h * dh..i * d + (h + 1) * dh];
            let mut dot = 0.0;
            for j in 0..=i {
                let v = &qkv[j * stride + vo..j * stride + vo + dh];
                dp[j] = go.iter().zip(v).map(|(a, b)| a * b).sum();
                dot += dp[j] * p[j];
                let dv = &mut dqkv[j * stride + vo..j * stride + vo + dh];
                for (a, b) in dv.iter_mut().zip(go) {
                    *a += p[j] * b;
                }
            }
            for j in 0..=i {
                let ds = p[j] * (dp[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                for t in 0..dh {
                    let kv = qkv[j * stride + ko + t];
                    let qv = qkv[i * stride + qo + t];
                    dqkv[i * stride + qo + t] += ds * kv;
                    dqkv[j * stride + ko + t] += ds * qv;
                }
            }
        }
    }
    dqkv
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(x: &[f64], r: usize, c: usize) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = x[i * c + j];
            }
        }
        t
    }

    #[test]
    fn gemm_transposes_match_naive() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let want = naive(m, k, n, &a, &b);
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let aa = if ta { transpose(&a, m, k) } else { a.clone() };
            let bb = if tb { transpose(&b, k, n) } else { b.clone() };
            let mut c = vec![0.0; m * n];
            gemm(m, k, n, &aa, ta, &bb, tb, &mut c, 1.0, 0.0);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for x in [-3.0, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn attention_rows_are_causal_distributions() {
        let (n, d, heads) = (4, 6, 2);
        let qkv: Vec<f64> = (0..n * 3 * d).map(|i| (i as f64 * 0.13).sin()).collect();
        let (_, probs) = causal_attention(&qkv, n, d, heads);
        for h in 0..heads {
            for i in 0..n {
                let row = &probs[(h * n + i) * n..(h * n + i + 1) * n];
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row[i + 1..].iter().all(|&p| p == 0.0));
            }
        }
    }

    #[test]
    fn softmax_of_constant_is_uniform() {
        let p = softmax(&[3.0; 8]);
        assert!(p.iter().all(|&x| (x - 0.125).abs() < 1e-15));
    }
}
