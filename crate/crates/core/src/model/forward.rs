use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::kernels::{
    attend_row, axpy, dot, log_sum_exp, matmul_t, matmul_t_backward_input, matmul_t_backward_weight, rmsnorm,
    rmsnorm_backward, silu, silu_grad, Rope,
};
use crate::model::params::{LayerOffsets, ParameterSet};
use crate::model::scalar::Scalar;
use crate::tokenizer::TokenId;

/// Per-position logits, `rows x vocab`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<T> {
    pub vocab: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Logits<T> {
    pub fn rows(&self) -> usize {
        self.data.len() / self.vocab
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.vocab..(i + 1) * self.vocab]
    }
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    x_in: Vec<T>,
    h1: Vec<T>,
    inv1: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Row `t` holds `n_heads x (t+1)` weights starting at `n_heads * t(t+1)/2`.
    probs: Vec<T>,
    att: Vec<T>,
    x_mid: Vec<T>,
    h2: Vec<T>,
    inv2: Vec<T>,
    gate: Vec<T>,
    up: Vec<T>,
    act: Vec<T>,
}

/// Activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    tokens: Vec<TokenId>,
    layers: Vec<LayerCache<T>>,
    x_final: Vec<T>,
    hf: Vec<T>,
    invf: Vec<T>,
    pub logits: Logits<T>,
}

pub(crate) fn check_tokens(config: &ModelConfig, tokens: &[TokenId]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("token sequence"));
    }
    if tokens.len() > config.context_len {
        return Err(Error::SequenceTooLong { len: tokens.len(), context: config.context_len });
    }
    for t in tokens {
        if t.index() >= config.vocab_size {
            return Err(Error::TokenOutOfRange { id: t.0, size: config.vocab_size });
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn probs_offset(n_heads: usize, t: usize) -> usize {
    n_heads * t * (t + 1) / 2
}

pub fn rope_for<T: Scalar>(config: &ModelConfig, len: usize) -> Rope<T> {
    Rope::new(config.d_head(), len, config.rope_base)
}

/// Full causal forward pass keeping every intermediate.
pub fn forward_cache<T: Scalar>(params: &ParameterSet<T>, tokens: &[TokenId]) -> Result<ForwardCache<T>> {
    let rope = rope_for(&params.config, tokens.len());
    forward_cache_with(params, tokens, &rope)
}

/// As [`forward_cache`] with caller-supplied rotary tables.
pub fn forward_cache_with<T: Scalar>(
    params: &ParameterSet<T>,
    tokens: &[TokenId],
    rope: &Rope<T>,
) -> Result<ForwardCache<T>> {
    let c = &params.config;
    check_tokens(c, tokens)?;
    if rope.max_len() < tokens.len() {
        return Err(Error::Shape(format!("rotary table covers {} positions, need {}", rope.max_len(), tokens.len())));
    }
    let s = tokens.len();
    let (d, qd, kvd, ff, v, nh, dh) = (c.d_model, c.q_dim(), c.kv_dim(), c.d_ff, c.vocab_size, c.n_heads, c.d_head());
    let lay = &params.layout;
    let w = &params.data;

    let mut x = vec![T::zero(); s * d];
    for (i, t) in tokens.iter().enumerate() {
        x[i * d..(i + 1) * d].copy_from_slice(&w[lay.embed + t.index() * d..lay.embed + (t.index() + 1) * d]);
    }

    let mut layers = Vec::with_capacity(c.n_layers);
    for o in &lay.layers {
        let x_in = x.clone();
        let mut h1 = vec![T::zero(); s * d];
        let mut inv1 = vec![T::zero(); s];
        rmsnorm(&x_in, &w[o.attn_norm..o.attn_norm + d], &mut h1, &mut inv1);
        let mut q = vec![T::zero(); s * qd];
        let mut k = vec![T::zero(); s * kvd];
        let mut vv = vec![T::zero(); s * kvd];
        matmul_t(&h1, &w[o.wq..o.wq + qd * d], d, &mut q);
        matmul_t(&h1, &w[o.wk..o.wk + kvd * d], d, &mut k);
        matmul_t(&h1, &w[o.wv..o.wv + kvd * d], d, &mut vv);
        rope.apply_rows(&mut q, qd, 0);
        rope.apply_rows(&mut k, kvd, 0);

        let mut probs = vec![T::zero(); probs_offset(nh, s)];
        let mut att = vec![T::zero(); s * qd];
        for t in 0..s {
            let off = probs_offset(nh, t);
            attend_row(
                &q[t * qd..(t + 1) * qd],
                &k[..(t + 1) * kvd],
                &vv[..(t + 1) * kvd],
                t + 1,
                nh,
                c.group_size(),
                dh,
                &mut probs[off..off + nh * (t + 1)],
                &mut att[t * qd..(t + 1) * qd],
            );
        }
        let mut proj = vec![T::zero(); s * d];
        matmul_t(&att, &w[o.wo..o.wo + d * qd], qd, &mut proj);
        let mut x_mid = x_in.clone();
        x_mid.iter_mut().zip(&proj).for_each(|(a, &b)| *a += b);

        let mut h2 = vec![T::zero(); s * d];
        let mut inv2 = vec![T::zero(); s];
        rmsnorm(&x_mid, &w[o.ffn_norm..o.ffn_norm + d], &mut h2, &mut inv2);
        let mut gate = vec![T::zero(); s * ff];
        let mut up = vec![T::zero(); s * ff];
        matmul_t(&h2, &w[o.w_gate..o.w_gate + ff * d], d, &mut gate);
        matmul_t(&h2, &w[o.w_up..o.w_up + ff * d], d, &mut up);
        let act: Vec<T> = gate.iter().zip(&up).map(|(&g, &u)| silu(g) * u).collect();
        let mut down = vec![T::zero(); s * d];
        matmul_t(&act, &w[o.w_down..o.w_down + d * ff], ff, &mut down);
        x = x_mid.clone();
        x.iter_mut().zip(&down).for_each(|(a, &b)| *a += b);

        layers.push(LayerCache { x_in, h1, inv1, q, k, v: vv, probs, att, x_mid, h2, inv2, gate, up, act });
    }

    let mut hf = vec![T::zero(); s * d];
    let mut invf = vec![T::zero(); s];
    rmsnorm(&x, &w[lay.final_norm..lay.final_norm + d], &mut hf, &mut invf);
    let mut logits = vec![T::zero(); s * v];
    matmul_t(&hf, &w[lay.head..lay.head + v * d], d, &mut logits);
    Ok(ForwardCache { tokens: tokens.to_vec(), layers, x_final: x, hf, invf, logits: Logits { vocab: v, data: logits } })
}

/// Per-position logits for a token sequence.
pub fn forward<T: Scalar>(params: &ParameterSet<T>, tokens: &[TokenId]) -> Result<Logits<T>> {
    Ok(forward_cache(params, tokens)?.logits)
}

/// Mean next-token negative log-likelihood in nats: one target per row.
pub fn nll_loss<T: Scalar>(logits: &Logits<T>, targets: &[TokenId]) -> Result<f64> {
    let (sum, n) = nll_sum(logits, targets)?;
    Ok(sum / n as f64)
}

fn nll_sum<T: Scalar>(logits: &Logits<T>, targets: &[TokenId]) -> Result<(f64, usize)> {
    if targets.len() != logits.rows() {
        return Err(Error::Shape(format!("{} targets for {} logit rows", targets.len(), logits.rows())));
    }
    if targets.is_empty() {
        return Err(Error::EmptyInput("targets"));
    }
    let mut sum = 0.0;
    for (i, t) in targets.iter().enumerate() {
        if t.index() >= logits.vocab {
            return Err(Error::TokenOutOfRange { id: t.0, size: logits.vocab });
        }
        let row = logits.row(i);
        sum += (log_sum_exp(row) - row[t.index()]).f64();
    }
    Ok((sum, targets.len()))
}

/// Summed next-token loss over `example[1..]` given `example[..n-1]`.
pub fn sequence_loss<T: Scalar>(params: &ParameterSet<T>, example: &[TokenId]) -> Result<(f64, usize)> {
    if example.len() < 2 {
        return Err(Error::invalid("an example needs at least two tokens"));
    }
    let logits = forward(params, &example[..example.len() - 1])?;
    nll_sum(&logits, &example[1..])
}

/// Adds `scale * d(sum of per-position NLL)/d(theta)` into `grads` and
/// returns the summed NLL.
pub fn accumulate_gradients<T: Scalar>(
    params: &ParameterSet<T>,
    inputs: &[TokenId],
    targets: &[TokenId],
    scale: T,
    grads: &mut ParameterSet<T>,
) -> Result<f64> {
    if grads.data.len() != params.data.len() {
        return Err(Error::Shape("gradient buffer does not match parameters".into()));
    }
    let cache = forward_cache(params, inputs)?;
    let (loss, _) = nll_sum(&cache.logits, targets)?;
    backward_from_cache(params, &cache, targets, scale, grads);
    Ok(loss)
}

/// Mean loss and its gradient for one sequence.
pub fn backward<T: Scalar>(
    params: &ParameterSet<T>,
    inputs: &[TokenId],
    targets: &[TokenId],
) -> Result<(f64, ParameterSet<T>)> {
    let mut grads = params.zeros_like();
    let scale = T::of(1.0 / targets.len().max(1) as f64);
    let sum = accumulate_gradients(params, inputs, targets, scale, &mut grads)?;
    Ok((sum / targets.len() as f64, grads))
}

fn backward_from_cache<T: Scalar>(
    params: &ParameterSet<T>,
    cache: &ForwardCache<T>,
    targets: &[TokenId],
    scale: T,
    grads: &mut ParameterSet<T>,
) {
    let c = &params.config;
    let s = cache.tokens.len();
    let (d, v) = (c.d_model, c.vocab_size);
    let lay = &params.layout;
    let w = &params.data;
    let g = &mut grads.data;

    // softmax minus one-hot
    let mut dlogits = cache.logits.data.clone();
    for (i, t) in targets.iter().enumerate() {
        let row = &mut dlogits[i * v..(i + 1) * v];
        let lse = log_sum_exp(row);
        for z in row.iter_mut() {
            *z = (*z - lse).exp() * scale;
        }
        row[t.index()] -= scale;
    }
    let mut dhf = vec![T::zero(); s * d];
    matmul_t_backward_input(&dlogits, &w[lay.head..lay.head + v * d], d, &mut dhf);
    matmul_t_backward_weight(&dlogits, &cache.hf, d, &mut g[lay.head..lay.head + v * d]);
    drop(dlogits);

    let mut dx = vec![T::zero(); s * d];
    {
        let (gain, dgain) = (&w[lay.final_norm..lay.final_norm + d], &mut g[lay.final_norm..lay.final_norm + d]);
        rmsnorm_backward(&dhf, &cache.x_final, gain, &cache.invf, &mut dx, dgain);
    }

    let rope = rope_for::<T>(c, s);
    for (o, lc) in lay.layers.iter().zip(&cache.layers).rev() {
        dx = layer_backward(c, o, lc, w, g, &rope, dx);
    }

    for (i, t) in cache.tokens.iter().enumerate() {
        let row = lay.embed + t.index() * d;
        axpy(T::one(), &dx[i * d..(i + 1) * d], &mut g[row..row + d]);
    }
}

/// Back-propagates through one block; takes and returns the residual gradient.
fn layer_backward<T: Scalar>(
    c: &ModelConfig,
    o: &LayerOffsets,
    lc: &LayerCache<T>,
    w: &[T],
    g: &mut [T],
    rope: &Rope<T>,
    dx_out: Vec<T>,
) -> Vec<T> {
    let s = lc.inv1.len();
    let (d, qd, kvd, ff, nh, dh) = (c.d_model, c.q_dim(), c.kv_dim(), c.d_ff, c.n_heads, c.d_head());
    let group = c.group_size();

    // feed-forward branch
    let mut dact = vec![T::zero(); s * ff];
    matmul_t_backward_input(&dx_out, &w[o.w_down..o.w_down + d * ff], ff, &mut dact);
    matmul_t_backward_weight(&dx_out, &lc.act, ff, &mut g[o.w_down..o.w_down + d * ff]);
    let mut dgate = vec![T::zero(); s * ff];
    let mut dup = vec![T::zero(); s * ff];
    for i in 0..s * ff {
        dgate[i] = dact[i] * lc.up[i] * silu_grad(lc.gate[i]);
        dup[i] = dact[i] * silu(lc.gate[i]);
    }
    let mut dh2 = vec![T::zero(); s * d];
    matmul_t_backward_input(&dgate, &w[o.w_gate..o.w_gate + ff * d], d, &mut dh2);
    matmul_t_backward_input(&dup, &w[o.w_up..o.w_up + ff * d], d, &mut dh2);
    matmul_t_backward_weight(&dgate, &lc.h2, d, &mut g[o.w_gate..o.w_gate + ff * d]);
    matmul_t_backward_weight(&dup, &lc.h2, d, &mut g[o.w_up..o.w_up + ff * d]);
    let mut dx_mid = dx_out;
    {
        let gain = &w[o.ffn_norm..o.ffn_norm + d];
        rmsnorm_backward(&dh2, &lc.x_mid, gain, &lc.inv2, &mut dx_mid, &mut g[o.ffn_norm..o.ffn_norm + d]);
    }

    // attention branch
    let mut datt = vec![T::zero(); s * qd];
    matmul_t_backward_input(&dx_mid, &w[o.wo..o.wo + d * qd], qd, &mut datt);
    matmul_t_backward_weight(&dx_mid, &lc.att, qd, &mut g[o.wo..o.wo + d * qd]);
    let mut dq = vec![T::zero(); s * qd];
    let mut dk = vec![T::zero(); s * kvd];
    let mut dv = vec![T::zero(); s * kvd];
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let mut dp = vec![T::zero(); s];
    for t in 0..s {
        let off = probs_offset(nh, t);
        for h in 0..nh {
            let kvh = h / group;
            let p = &lc.probs[off + h * (t + 1)..off + (h + 1) * (t + 1)];
            let da = &datt[t * qd + h * dh..t * qd + (h + 1) * dh];
            let mut pdp = T::zero();
            for j in 0..=t {
                let vj = &lc.v[j * kvd + kvh * dh..j * kvd + (kvh + 1) * dh];
                dp[j] = dot(da, vj);
                pdp += p[j] * dp[j];
                axpy(p[j], da, &mut dv[j * kvd + kvh * dh..j * kvd + (kvh + 1) * dh]);
            }
            let qh = &lc.q[t * qd + h * dh..t * qd + (h + 1) * dh];
            for j in 0..=t {
                let ds = p[j] * (dp[j] - pdp) * scale;
                if ds == T::zero() {
                    continue;
                }
                let kj = &lc.k[j * kvd + kvh * dh..j * kvd + (kvh + 1) * dh];
                axpy(ds, kj, &mut dq[t * qd + h * dh..t * qd + (h + 1) * dh]);
                axpy(ds, qh, &mut dk[j * kvd + kvh * dh..j * kvd + (kvh + 1) * dh]);
            }
        }
    }
    for i in 0..s {
        for head in dq[i * qd..(i + 1) * qd].chunks_exact_mut(dh) {
            rope.apply_inverse(head, i);
        }
        for head in dk[i * kvd..(i + 1) * kvd].chunks_exact_mut(dh) {
            rope.apply_inverse(head, i);
        }
    }
    let mut dh1 = vec![T::zero(); s * d];
    matmul_t_backward_input(&dq, &w[o.wq..o.wq + qd * d], d, &mut dh1);
    matmul_t_backward_input(&dk, &w[o.wk..o.wk + kvd * d], d, &mut dh1);
    matmul_t_backward_input(&dv, &w[o.wv..o.wv + kvd * d], d, &mut dh1);
    matmul_t_backward_weight(&dq, &lc.h1, d, &mut g[o.wq..o.wq + qd * d]);
    matmul_t_backward_weight(&dk, &lc.h1, d, &mut g[o.wk..o.wk + kvd * d]);
    matmul_t_backward_weight(&dv, &lc.h1, d, &mut g[o.wv..o.wv + kvd * d]);
    let mut dx_in = dx_mid;
    {
        let gain = &w[o.attn_norm..o.attn_norm + d];
        rmsnorm_backward(&dh1, &lc.x_in, gain, &lc.inv1, &mut dx_in, &mut g[o.attn_norm..o.attn_norm + d]);
    }
    dx_in
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::DEFAULT_ROPE_BASE;
    use crate::model::params::init_params;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn cfg(vocab: usize, d: usize, layers: usize, heads: usize, kv: usize, ff: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab,
            d_model: d,
            n_layers: layers,
            n_heads: heads,
            n_kv_heads: kv,
            d_ff: ff,
            context_len: 32,
            rope_base: DEFAULT_ROPE_BASE,
        }
    }

    fn ids(v: &[u32]) -> Vec<TokenId> {
        v.iter().map(|&x| TokenId(x)).collect()
    }

    /// Textbook multi-head attention transformer written independently:
    /// explicit score matrices, masked softmax, no grouping.
    fn reference_forward(p: &ParameterSet<f64>, tokens: &[TokenId], rotate: bool) -> Vec<Vec<f64>> {
        let c = &p.config;
        let (d, nh, dh, ff, v) = (c.d_model, c.n_heads, c.d_head(), c.d_ff, c.vocab_size);
        let mat = |off: usize, rows: usize, cols: usize| -> Vec<Vec<f64>> {
            (0..rows).map(|r| p.data[off + r * cols..off + (r + 1) * cols].to_vec()).collect()
        };
        let mv = |m: &Vec<Vec<f64>>, x: &[f64]| -> Vec<f64> {
            m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
        };
        let norm = |x: &[f64], g: &[f64]| -> Vec<f64> {
            let r = (x.iter().map(|a| a * a).sum::<f64>() / x.len() as f64 + 1e-5).sqrt();
            x.iter().zip(g).map(|(a, b)| a / r * b).collect()
        };
        let rot = |x: &mut [f64], pos: usize| {
            if !rotate {
                return;
            }
            for h in 0..nh {
                let v = &mut x[h * dh..(h + 1) * dh];
                let half = dh / 2;
                for i in 0..half {
                    let th = pos as f64 / c.rope_base.powf(2.0 * i as f64 / dh as f64);
                    let (a, b) = (v[i], v[i + half]);
                    v[i] = a * th.cos() - b * th.sin();
                    v[i + half] = a * th.sin() + b * th.cos();
                }
            }
        };
        let s = tokens.len();
        let lay = &p.layout;
        let mut xs: Vec<Vec<f64>> = tokens.iter().map(|t| p.data[lay.embed + t.index() * d..][..d].to_vec()).collect();
        for o in &lay.layers {
            let (wq, wk, wv, wo) = (mat(o.wq, nh * dh, d), mat(o.wk, nh * dh, d), mat(o.wv, nh * dh, d), mat(o.wo, d, nh * dh));
            let g1 = &p.data[o.attn_norm..o.attn_norm + d];
            let hs: Vec<Vec<f64>> = xs.iter().map(|x| norm(x, g1)).collect();
            let mut qs: Vec<Vec<f64>> = hs.iter().map(|h| mv(&wq, h)).collect();
            let mut ks: Vec<Vec<f64>> = hs.iter().map(|h| mv(&wk, h)).collect();
            let vs: Vec<Vec<f64>> = hs.iter().map(|h| mv(&wv, h)).collect();
            for i in 0..s {
                rot(&mut qs[i], i);
                rot(&mut ks[i], i);
            }
            for i in 0..s {
                let mut cat = vec![0.0; nh * dh];
                for h in 0..nh {
                    let r = h * dh..(h + 1) * dh;
                    let sc: Vec<f64> = (0..s)
                        .map(|j| {
                            if j > i {
                                f64::NEG_INFINITY
                            } else {
                                qs[i][r.clone()].iter().zip(&ks[j][r.clone()]).map(|(a, b)| a * b).sum::<f64>()
                                    / (dh as f64).sqrt()
                            }
                        })
                        .collect();
                    let m = sc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = sc.iter().map(|x| (x - m).exp()).collect();
                    let z: f64 = e.iter().sum();
                    for j in 0..s {
                        for k in 0..dh {
                            cat[h * dh + k] += e[j] / z * vs[j][h * dh + k];
                        }
                    }
                }
                let a = mv(&wo, &cat);
                for k in 0..d {
                    xs[i][k] += a[k];
                }
            }
            let (wg, wu, wd) = (mat(o.w_gate, ff, d), mat(o.w_up, ff, d), mat(o.w_down, d, ff));
            let g2 = &p.data[o.ffn_norm..o.ffn_norm + d];
            for x in xs.iter_mut() {
                let h = norm(x, g2);
                let (ga, u) = (mv(&wg, &h), mv(&wu, &h));
                let act: Vec<f64> = ga.iter().zip(&u).map(|(a, b)| a / (1.0 + (-a).exp()) * b).collect();
                let y = mv(&wd, &act);
                for k in 0..d {
                    x[k] += y[k];
                }
            }
        }
        let head = mat(lay.head, v, d);
        let gf = &p.data[lay.final_norm..lay.final_norm + d];
        xs.iter().map(|x| mv(&head, &norm(x, gf))).collect()
    }

    fn assert_close_to_reference(p: &ParameterSet<f64>, tokens: &[TokenId], rotate: bool) {
        let reference = reference_forward(p, tokens, rotate);
        let ours = if rotate {
            forward(p, tokens).unwrap()
        } else {
            let rope = Rope::identity(p.config.d_head(), tokens.len());
            forward_cache_with(p, tokens, &rope).unwrap().logits
        };
        for (i, r) in reference.iter().enumerate() {
            for (a, b) in ours.row(i).iter().zip(r) {
                assert!((a - b).abs() < 1e-10, "row {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn matches_textbook_attention_without_rotation() {
        let p = init_params::<f64>(&cfg(11, 8, 2, 2, 2, 12), 5).unwrap();
        assert_close_to_reference(&p, &ids(&[1, 4, 2, 9, 9, 0, 3]), false);
    }

    #[test]
    fn matches_textbook_attention_with_rotation() {
        let p = init_params::<f64>(&cfg(11, 16, 2, 4, 4, 20), 6).unwrap();
        assert_close_to_reference(&p, &ids(&[1, 4, 2, 9, 9, 0, 3, 7, 7, 7]), true);
    }

    #[test]
    fn grouped_attention_equals_duplicated_kv_heads() {
        let c = cfg(9, 8, 1, 4, 2, 8);
        let p = init_params::<f64>(&c, 2).unwrap();
        // expand each kv head to the query heads that share it
        let full = ModelConfig { n_kv_heads: 4, ..c.clone() };
        let mut q = ParameterSet::<f64>::zeros(&full).unwrap();
        for spec in p.layout.tensors.iter() {
            let dst = q.layout.tensors.iter().find(|t| t.name == spec.name).unwrap().clone();
            if spec.name.ends_with(".wk") || spec.name.ends_with(".wv") {
                let dh = c.d_head();
                for h in 0..4 {
                    let src = spec.offset + (h / 2) * dh * c.d_model;
                    let dsto = dst.offset + h * dh * c.d_model;
                    let chunk = p.data[src..src + dh * c.d_model].to_vec();
                    q.data[dsto..dsto + dh * c.d_model].copy_from_slice(&chunk);
                }
            } else {
                q.data[dst.range()].copy_from_slice(&p.data[spec.range()]);
            }
        }
        let t = ids(&[3, 1, 4, 1, 5]);
        let a = forward(&p, &t).unwrap();
        let b = forward(&q, &t).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn causal_perturbation() {
        let mut rng = seeded(3);
        let p = init_params::<f32>(&cfg(20, 16, 2, 2, 1, 24), 1).unwrap();
        for _ in 0..20 {
            let n = rng.gen_range(2..20);
            let a: Vec<TokenId> = (0..n).map(|_| TokenId(rng.gen_range(0..20))).collect();
            let j = rng.gen_range(1..n);
            let mut b = a.clone();
            b[j] = TokenId((b[j].0 + 1 + rng.gen_range(0..18)) % 20);
            let (la, lb) = (forward(&p, &a).unwrap(), forward(&p, &b).unwrap());
            for i in 0..j {
                assert_eq!(
                    la.row(i).iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                    lb.row(i).iter().map(|x| x.to_bits()).collect::<Vec<_>>()
                );
            }
        }
    }

    #[test]
    fn one_row_per_position() {
        let p = init_params::<f32>(&cfg(7, 4, 1, 2, 2, 8), 0).unwrap();
        assert_eq!(forward(&p, &ids(&[3])).unwrap().rows(), 1);
        assert!(forward(&p, &[]).is_err());
        assert!(forward(&p, &ids(&[7])).is_err());
        assert!(forward(&p, &vec![TokenId(0); 33]).is_err());
    }

    #[test]
    fn uniform_logits_loss() {
        let l = Logits { vocab: 4096, data: vec![0.0f64; 4096 * 3] };
        let loss = nll_loss(&l, &ids(&[0, 17, 4095])).unwrap();
        assert!((loss - 4096f64.ln()).abs() < 1e-12);
        assert!((4096f64.ln() - 8.3178).abs() < 1e-4);
    }

    #[test]
    fn dominant_logits_loss_vanishes() {
        let mut data = vec![0.0f64; 8];
        data[2] = 1e3;
        data[4 + 1] = 1e3;
        let loss = nll_loss(&Logits { vocab: 4, data }, &ids(&[2, 1])).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn two_position_hand_loss() {
        // row 0: (0, ln 3) target 1 -> -ln(3/4); row 1: (0, 0) target 0 -> ln 2
        let data = vec![0.0, 3f64.ln(), 0.0, 0.0];
        let loss = nll_loss(&Logits { vocab: 2, data }, &ids(&[1, 0])).unwrap();
        let oracle = (-(3.0f64 / 4.0).ln() + 2f64.ln()) / 2.0;
        assert!((loss - oracle).abs() < 1e-14);
        assert!(nll_loss(&Logits { vocab: 2, data: vec![0.0; 4] }, &ids(&[1])).is_err());
    }

    fn grad_check(c: &ModelConfig, seed: u64) {
        let mut p = init_params::<f64>(c, seed).unwrap();
        // larger weights make the check more sensitive
        for x in p.data.iter_mut() {
            *x *= 5.0;
        }
        let mut rng = seeded(seed);
        let n = 6;
        let toks: Vec<TokenId> = (0..n).map(|_| TokenId(rng.gen_range(0..c.vocab_size as u32))).collect();
        let (inp, tgt) = (&toks[..n - 1], &toks[1..]);
        let (_, g) = backward(&p, inp, tgt).unwrap();
        let h = 1e-5;
        for i in 0..p.data.len() {
            let orig = p.data[i];
            p.data[i] = orig + h;
            let up = nll_loss(&forward(&p, inp).unwrap(), tgt).unwrap();
            p.data[i] = orig - h;
            let dn = nll_loss(&forward(&p, inp).unwrap(), tgt).unwrap();
            p.data[i] = orig;
            let fd = (up - dn) / (2.0 * h);
            let err = (g.data[i] - fd).abs() / fd.abs().max(1.0);
            assert!(err < 1e-4, "param {i}: analytic {} vs fd {fd}", g.data[i]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        grad_check(&cfg(7, 8, 2, 2, 1, 12), 1);
        grad_check(&cfg(5, 4, 1, 1, 1, 8), 2);
    }

    #[test]
    fn unused_embedding_rows_have_zero_gradient() {
        let p = init_params::<f64>(&cfg(10, 8, 1, 2, 2, 8), 4).unwrap();
        let t = ids(&[1, 2, 3, 2]);
        let (_, g) = backward(&p, &t[..3], &t[1..]).unwrap();
        let e = g.tensor("embed").unwrap();
        for tok in [0usize, 4, 5, 6, 7, 8, 9] {
            assert!(e[tok * 8..(tok + 1) * 8].iter().all(|&x| x == 0.0));
        }
        assert!(e[8..16].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn gradient_scales_linearly() {
        let p = init_params::<f64>(&cfg(10, 8, 1, 2, 2, 8), 4).unwrap();
        let t = ids(&[1, 2, 3, 2, 9]);
        let mut a = p.zeros_like();
        let mut b = p.zeros_like();
        accumulate_gradients(&p, &t[..4], &t[1..], 1.0, &mut a).unwrap();
        accumulate_gradients(&p, &t[..4], &t[1..], 3.0, &mut b).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((3.0 * x - y).abs() < 1e-12);
        }
    }
}
