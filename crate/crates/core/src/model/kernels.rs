//! Dense kernels shared by training, gradient checks and incremental inference.
//!
//! Everything is row-major. Weight matrices are stored `out x in`, so a
//! projection is `y_i = W x_i`, computed as one dot product per output.

use crate::model::scalar::Scalar;

pub const RMS_EPS: f64 = 1e-5;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[i, j] = x[i, :] . w[j, :]` for `x: n x k`, `w: m x k`, `out: n x m`.
pub fn matmul_t<T: Scalar>(x: &[T], w: &[T], k: usize, out: &mut [T]) {
    let m = w.len() / k;
    debug_assert_eq!(out.len(), (x.len() / k) * m);
    for (xi, oi) in x.chunks_exact(k).zip(out.chunks_exact_mut(m)) {
        matvec(w, xi, oi);
    }
}

/// `out[j] = w[j, :] . x`
#[inline]
pub fn matvec<T: Scalar>(w: &[T], x: &[T], out: &mut [T]) {
    let k = x.len();
    for (o, wj) in out.iter_mut().zip(w.chunks_exact(k)) {
        *o = dot(wj, x);
    }
}

/// Input gradient of `matmul_t`: `dx[i, :] += sum_j dout[i, j] w[j, :]`.
pub fn matmul_t_backward_input<T: Scalar>(dout: &[T], w: &[T], k: usize, dx: &mut [T]) {
    let m = w.len() / k;
    for (gi, dxi) in dout.chunks_exact(m).zip(dx.chunks_exact_mut(k)) {
        for (&g, wj) in gi.iter().zip(w.chunks_exact(k)) {
            if g != T::zero() {
                axpy(g, wj, dxi);
            }
        }
    }
}

/// Weight gradient of `matmul_t`: `dw[j, :] += sum_i dout[i, j] x[i, :]`.
pub fn matmul_t_backward_weight<T: Scalar>(dout: &[T], x: &[T], k: usize, dw: &mut [T]) {
    let m = dw.len() / k;
    for (gi, xi) in dout.chunks_exact(m).zip(x.chunks_exact(k)) {
        for (&g, dwj) in gi.iter().zip(dw.chunks_exact_mut(k)) {
            if g != T::zero() {
                axpy(g, xi, dwj);
            }
        }
    }
}

/// RMS normalisation of one row; returns `1 / rms`.
#[inline]
pub fn rmsnorm_row<T: Scalar>(x: &[T], gain: &[T], out: &mut [T]) -> T {
    let ms = dot(x, x) / T::of(x.len() as f64);
    let inv = T::one() / (ms + T::of(RMS_EPS)).sqrt();
    for ((o, &xi), &g) in out.iter_mut().zip(x).zip(gain) {
        *o = xi * inv * g;
    }
    inv
}

pub fn rmsnorm<T: Scalar>(x: &[T], gain: &[T], out: &mut [T], inv_rms: &mut [T]) {
    let d = gain.len();
    for ((xi, oi), r) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)).zip(inv_rms.iter_mut()) {
        *r = rmsnorm_row(xi, gain, oi);
    }
}

/// Accumulates `dx` and `dgain` for `y = x * inv_rms * gain`.
pub fn rmsnorm_backward<T: Scalar>(dy: &[T], x: &[T], gain: &[T], inv_rms: &[T], dx: &mut [T], dgain: &mut [T]) {
    let d = gain.len();
    let n = T::of(d as f64);
    for (((dyi, xi), dxi), &r) in
        dy.chunks_exact(d).zip(x.chunks_exact(d)).zip(dx.chunks_exact_mut(d)).zip(inv_rms)
    {
        // mean(dxhat * xhat) where dxhat = dy * g and xhat = x * r
        let mut m = T::zero();
        for k in 0..d {
            let xhat = xi[k] * r;
            dgain[k] += dyi[k] * xhat;
            m += dyi[k] * gain[k] * xhat;
        }
        m /= n;
        for k in 0..d {
            let xhat = xi[k] * r;
            dxi[k] += r * (dyi[k] * gain[k] - xhat * m);
        }
    }
}

#[inline]
pub fn silu<T: Scalar>(x: T) -> T {
    x / (T::one() + (-x).exp())
}

#[inline]
pub fn silu_grad<T: Scalar>(x: T) -> T {
    let s = T::one() / (T::one() + (-x).exp());
    s * (T::one() + x * (T::one() - s))
}

/// Rotary tables in rotate-half form: for pair `i < d_head/2` at position
/// `p`, angle `p * base^(-2i/d_head)`. Angles are computed in f64.
#[derive(Debug, Clone)]
pub struct Rope<T> {
    pub half: usize,
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Scalar> Rope<T> {
    pub fn new(d_head: usize, max_len: usize, base: f64) -> Self {
        let half = d_head / 2;
        let mut cos = Vec::with_capacity(max_len * half);
        let mut sin = Vec::with_capacity(max_len * half);
        for p in 0..max_len {
            for i in 0..half {
                let freq = base.powf(-2.0 * i as f64 / d_head as f64);
                let a = p as f64 * freq;
                cos.push(T::of(a.cos()));
                sin.push(T::of(a.sin()));
            }
        }
        Rope { half, cos, sin }
    }

    /// All-zero angles (identity rotation), for reference comparisons.
    pub fn identity(d_head: usize, max_len: usize) -> Self {
        let half = d_head / 2;
        Rope { half, cos: vec![T::one(); max_len * half], sin: vec![T::zero(); max_len * half] }
    }

    pub fn max_len(&self) -> usize {
        if self.half == 0 { 0 } else { self.cos.len() / self.half }
    }

    /// Rotates one head vector in place.
    #[inline]
    pub fn apply(&self, v: &mut [T], pos: usize) {
        let h = self.half;
        let (c, s) = (&self.cos[pos * h..(pos + 1) * h], &self.sin[pos * h..(pos + 1) * h]);
        for i in 0..h {
            let (a, b) = (v[i], v[i + h]);
            v[i] = a * c[i] - b * s[i];
            v[i + h] = b * c[i] + a * s[i];
        }
    }

    /// Transposed rotation, for back-propagating through `apply`.
    #[inline]
    pub fn apply_inverse(&self, v: &mut [T], pos: usize) {
        let h = self.half;
        let (c, s) = (&self.cos[pos * h..(pos + 1) * h], &self.sin[pos * h..(pos + 1) * h]);
        for i in 0..h {
            let (a, b) = (v[i], v[i + h]);
            v[i] = a * c[i] + b * s[i];
            v[i + h] = b * c[i] - a * s[i];
        }
    }

    /// Rotates every head of every row of `x` (`n x (heads*d_head)`), row `i` at position `start + i`.
    pub fn apply_rows(&self, x: &mut [T], width: usize, start: usize) {
        let dh = 2 * self.half;
        for (i, row) in x.chunks_exact_mut(width).enumerate() {
            for head in row.chunks_exact_mut(dh) {
                self.apply(head, start + i);
            }
        }
    }
}

/// Causal attention output for one query row against `n_keys` cached rows.
///
/// `keys`/`values` are `n_keys x kv_dim`; query head `h` reads kv head
/// `h / group`. Softmax weights are written to `probs` (`n_heads x n_keys`).
#[allow(clippy::too_many_arguments)]
pub fn attend_row<T: Scalar>(
    q: &[T],
    keys: &[T],
    values: &[T],
    n_keys: usize,
    n_heads: usize,
    group: usize,
    d_head: usize,
    probs: &mut [T],
    out: &mut [T],
) {
    let kv_dim = keys.len() / n_keys.max(1);
    let scale = T::of(1.0 / (d_head as f64).sqrt());
    for h in 0..n_heads {
        let g = h / group;
        let qh = &q[h * d_head..(h + 1) * d_head];
        let p = &mut probs[h * n_keys..(h + 1) * n_keys];
        let mut max = T::neg_infinity();
        for (j, pj) in p.iter_mut().enumerate() {
            let k = &keys[j * kv_dim + g * d_head..j * kv_dim + (g + 1) * d_head];
            *pj = dot(qh, k) * scale;
            if *pj > max {
                max = *pj;
            }
        }
        let mut sum = T::zero();
        for pj in p.iter_mut() {
            *pj = (*pj - max).exp();
            sum += *pj;
        }
        let inv = T::one() / sum;
        let oh = &mut out[h * d_head..(h + 1) * d_head];
        oh.iter_mut().for_each(|o| *o = T::zero());
        for (j, pj) in p.iter_mut().enumerate() {
            *pj *= inv;
            let v = &values[j * kv_dim + g * d_head..j * kv_dim + (g + 1) * d_head];
            axpy(*pj, v, oh);
        }
    }
}

/// Log-sum-exp of one row.
#[inline]
pub fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::infinity() {
        return max;
    }
    let s: T = row.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}
