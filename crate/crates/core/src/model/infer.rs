use crate::error::{Error, Result};
use crate::model::forward::{check_tokens, rope_for};
use crate::model::kernels::{attend_row, matvec, rmsnorm_row, silu, Rope};
use crate::model::params::ParameterSet;
use crate::model::scalar::Scalar;
use crate::tokenizer::TokenId;

/// Incremental decoder with a key/value cache over a sliding window.
///
/// Logits after any push are bit-identical to the last row of a full
/// forward pass over the current window. When the window is full the
/// earliest token is dropped and the cache is rebuilt, because every
/// remaining position's activations depend on the dropped token.
#[derive(Debug, Clone)]
pub struct InferenceSession<'a, T> {
    params: &'a ParameterSet<T>,
    window: usize,
    rope: Rope<T>,
    tokens: Vec<TokenId>,
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    logits: Vec<T>,
    rebuilds: usize,
    // scratch
    x: Vec<T>,
    h: Vec<T>,
    q: Vec<T>,
    att: Vec<T>,
    proj: Vec<T>,
    gate: Vec<T>,
    up: Vec<T>,
    probs: Vec<T>,
}

impl<'a, T: Scalar> InferenceSession<'a, T> {
    /// `window` is clamped to the model context length.
    pub fn new(params: &'a ParameterSet<T>, window: usize) -> Result<Self> {
        let c = &params.config;
        if window == 0 {
            return Err(Error::invalid("inference window must be positive"));
        }
        let window = window.min(c.context_len);
        let layers = c.n_layers;
        Ok(InferenceSession {
            params,
            window,
            rope: rope_for(c, window),
            tokens: Vec::with_capacity(window),
            keys: vec![Vec::with_capacity(window * c.kv_dim()); layers],
            values: vec![Vec::with_capacity(window * c.kv_dim()); layers],
            logits: vec![T::zero(); c.vocab_size],
            rebuilds: 0,
            x: vec![T::zero(); c.d_model],
            h: vec![T::zero(); c.d_model],
            q: vec![T::zero(); c.q_dim()],
            att: vec![T::zero(); c.q_dim()],
            proj: vec![T::zero(); c.d_model],
            gate: vec![T::zero(); c.d_ff],
            up: vec![T::zero(); c.d_ff],
            probs: vec![T::zero(); c.n_heads * window],
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    /// Number of full cache rebuilds caused by window slides.
    pub fn rebuilds(&self) -> usize {
        self.rebuilds
    }

    /// Logits predicting the token after the current window.
    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    /// Replaces the window with the last `window` tokens of `context`.
    pub fn reset(&mut self, context: &[TokenId]) -> Result<()> {
        check_tokens(&self.params.config, &context[context.len().saturating_sub(self.window)..])?;
        let start = context.len().saturating_sub(self.window);
        self.prefill(context[start..].to_vec());
        Ok(())
    }

    pub fn push(&mut self, token: TokenId) -> Result<()> {
        if token.index() >= self.params.config.vocab_size {
            return Err(Error::TokenOutOfRange { id: token.0, size: self.params.config.vocab_size });
        }
        if self.tokens.len() == self.window {
            let mut next = self.tokens[1..].to_vec();
            next.push(token);
            self.rebuilds += 1;
            self.prefill(next);
        } else {
            self.tokens.push(token);
            self.step(token, self.tokens.len() - 1);
        }
        Ok(())
    }

    fn prefill(&mut self, tokens: Vec<TokenId>) {
        for l in 0..self.keys.len() {
            self.keys[l].clear();
            self.values[l].clear();
        }
        self.tokens = tokens;
        for pos in 0..self.tokens.len() {
            let t = self.tokens[pos];
            self.step(t, pos);
        }
    }

    /// Runs one position through every block, appending to the cache.
    fn step(&mut self, token: TokenId, pos: usize) {
        let p = self.params;
        let c = &p.config;
        let (d, qd, kvd, ff, v) = (c.d_model, c.q_dim(), c.kv_dim(), c.d_ff, c.vocab_size);
        let w = &p.data;
        let lay = &p.layout;
        self.x.copy_from_slice(&w[lay.embed + token.index() * d..lay.embed + (token.index() + 1) * d]);
        for (l, o) in lay.layers.iter().enumerate() {
            rmsnorm_row(&self.x, &w[o.attn_norm..o.attn_norm + d], &mut self.h);
            matvec(&w[o.wq..o.wq + qd * d], &self.h, &mut self.q);
            let kstart = self.keys[l].len();
            self.keys[l].resize(kstart + kvd, T::zero());
            self.values[l].resize(kstart + kvd, T::zero());
            matvec(&w[o.wk..o.wk + kvd * d], &self.h, &mut self.keys[l][kstart..]);
            matvec(&w[o.wv..o.wv + kvd * d], &self.h, &mut self.values[l][kstart..]);
            self.rope.apply_rows(&mut self.q, qd, pos);
            self.rope.apply_rows(&mut self.keys[l][kstart..], kvd, pos);
            let n = pos + 1;
            attend_row(
                &self.q,
                &self.keys[l],
                &self.values[l],
                n,
                c.n_heads,
                c.group_size(),
                c.d_head(),
                &mut self.probs[..c.n_heads * n],
                &mut self.att,
            );
            matvec(&w[o.wo..o.wo + d * qd], &self.att, &mut self.proj);
            self.x.iter_mut().zip(&self.proj).for_each(|(a, &b)| *a += b);
            rmsnorm_row(&self.x, &w[o.ffn_norm..o.ffn_norm + d], &mut self.h);
            matvec(&w[o.w_gate..o.w_gate + ff * d], &self.h, &mut self.gate);
            matvec(&w[o.w_up..o.w_up + ff * d], &self.h, &mut self.up);
            for (g, &u) in self.gate.iter_mut().zip(&self.up) {
                *g = silu(*g) * u;
            }
            matvec(&w[o.w_down..o.w_down + d * ff], &self.gate, &mut self.proj);
            self.x.iter_mut().zip(&self.proj).for_each(|(a, &b)| *a += b);
        }
        rmsnorm_row(&self.x, &w[lay.final_norm..lay.final_norm + d], &mut self.h);
        matvec(&w[lay.head..lay.head + v * d], &self.h, &mut self.logits);
    }
}
