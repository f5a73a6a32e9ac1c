use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CONTEXT_LEN: usize = 2048;
pub const DEFAULT_ROPE_BASE: f64 = 10_000.0;

/// Decoder-only transformer architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub n_kv_heads: usize,
    pub d_ff: usize,
    pub context_len: usize,
    pub rope_base: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.vocab_size == 0 || self.d_model == 0 || self.d_ff == 0 || self.context_len == 0 {
            return bad(format!("model dimensions must be positive: {self:?}"));
        }
        if self.n_heads == 0 || self.n_kv_heads == 0 {
            return bad("head counts must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.n_heads % self.n_kv_heads != 0 {
            return bad(format!("n_heads {} not divisible by n_kv_heads {}", self.n_heads, self.n_kv_heads));
        }
        if self.d_head() % 2 != 0 {
            return bad(format!("head dimension {} must be even for rotary embeddings", self.d_head()));
        }
        if !(self.rope_base > 0.0) || !self.rope_base.is_finite() {
            return bad("rope_base must be positive".into());
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Query heads per key/value head.
    pub fn group_size(&self) -> usize {
        self.n_heads / self.n_kv_heads
    }

    pub fn q_dim(&self) -> usize {
        self.n_heads * self.d_head()
    }

    pub fn kv_dim(&self) -> usize {
        self.n_kv_heads * self.d_head()
    }

    /// Short identifier used in manifests and reports.
    pub fn id(&self) -> String {
        format!(
            "d{}-l{}-h{}-kv{}-ff{}",
            self.d_model, self.n_layers, self.n_heads, self.n_kv_heads, self.d_ff
        )
    }

    /// Grid member with the standard width-derived settings: 32-dim heads,
    /// a quarter as many key/value heads, SwiGLU width 8/3 d rounded to 16.
    pub fn scaled(vocab_size: usize, d_model: usize, n_layers: usize, context_len: usize) -> Self {
        let d_head = 32.min(d_model);
        let n_heads = (d_model / d_head).max(1);
        let n_kv_heads = (n_heads / 4).max(1);
        ModelConfig {
            vocab_size,
            d_model,
            n_layers,
            n_heads,
            n_kv_heads,
            d_ff: swiglu_width(d_model),
            context_len,
            rope_base: DEFAULT_ROPE_BASE,
        }
    }
}

/// `8/3 * d_model` rounded to the nearest multiple of 16 (at least 16).
pub fn swiglu_width(d_model: usize) -> usize {
    let raw = 8.0 * d_model as f64 / 3.0;
    (((raw / 16.0).round() as usize) * 16).max(16)
}

pub const GRID_D_MODEL: [usize; 6] = [64, 96, 128, 192, 256, 384];
pub const GRID_N_LAYERS: [usize; 4] = [2, 4, 6, 8];

/// The default sweep grid (stand-in for an undisclosed model family).
pub fn default_grid(vocab_size: usize, context_len: usize) -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for &d in &GRID_D_MODEL {
        for &l in &GRID_N_LAYERS {
            out.push(ModelConfig::scaled(vocab_size, d, l, context_len));
        }
    }
    out
}

/// Exact parameter count: embedding, per-layer attention, norms and SwiGLU
/// matrices, final norm and untied output head.
pub fn count_params(config: &ModelConfig) -> u64 {
    let d = config.d_model as u64;
    let v = config.vocab_size as u64;
    let q = config.q_dim() as u64;
    let kv = config.kv_dim() as u64;
    let ff = config.d_ff as u64;
    let per_layer = 2 * d + d * q + 2 * d * kv + q * d + 3 * d * ff;
    v * d + config.n_layers as u64 * per_layer + d + v * d
}
