//! Integer FLOPs accounting.
//!
//! Embedding lookups cost nothing; output logits are counted unless excluded.
//! All counts are exact `u128` values.

use crate::error::{Error, Result};
use crate::model::{count_params, ModelConfig};

/// Forward-pass FLOPs for one sequence of `seq_len` tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlopsBreakdown {
    pub seq_len: u128,
    pub attention_flops: u128,
    pub dense_flops: u128,
    pub embedding_flops: u128,
    pub logit_flops: u128,
    pub total_forward: u128,
}

impl FlopsBreakdown {
    /// Every component divided by the sequence length. Each term carries a
    /// factor of `s`, so the division is exact.
    pub fn per_token(&self) -> FlopsBreakdown {
        let s = self.seq_len;
        FlopsBreakdown {
            seq_len: 1,
            attention_flops: self.attention_flops / s,
            dense_flops: self.dense_flops / s,
            embedding_flops: self.embedding_flops / s,
            logit_flops: self.logit_flops / s,
            total_forward: self.total_forward / s,
        }
    }
}

pub fn forward_flops(config: &ModelConfig, seq_len: usize) -> FlopsBreakdown {
    forward_flops_with(config, seq_len, true)
}

pub fn forward_flops_with(config: &ModelConfig, seq_len: usize, include_logits: bool) -> FlopsBreakdown {
    let s = seq_len.max(1) as u128;
    let d = config.d_model as u128;
    let h = config.n_heads as u128;
    let dh = config.d_head() as u128;
    let kv = config.n_kv_heads as u128;
    let ff = config.d_ff as u128;
    let l = config.n_layers as u128;
    let query = 2 * s * d * (h * dh);
    let key_value = 2 * s * d * (2 * kv * dh);
    let scores = 2 * s * s * h * dh;
    let softmax = 3 * h * s * s;
    let score_value = 2 * s * s * h * dh;
    let output = 2 * s * d * (h * dh);
    let attention = l * (query + key_value + scores + softmax + score_value + output);
    let dense = l * (2 * s * 3 * d * ff);
    let logits = if include_logits { 2 * s * d * config.vocab_size as u128 } else { 0 };
    FlopsBreakdown {
        seq_len: s,
        attention_flops: attention,
        dense_flops: dense,
        embedding_flops: 0,
        logit_flops: logits,
        total_forward: attention + dense + logits,
    }
}

/// Forward FLOPs per token at context length `seq_len`.
pub fn forward_flops_per_token(config: &ModelConfig, seq_len: usize) -> u128 {
    forward_flops(config, seq_len).per_token().total_forward
}

/// Three forward passes' worth of compute per trained token.
pub fn training_flops(config: &ModelConfig, n_tokens: u128, seq_len: usize) -> u128 {
    3 * forward_flops_per_token(config, seq_len) * n_tokens
}

/// `6 N + 12 L H d_head s` training FLOPs per token.
pub fn palm_flops_per_token(config: &ModelConfig, seq_len: usize) -> u128 {
    6 * count_params(config) as u128
        + 12 * config.n_layers as u128 * config.n_heads as u128 * config.d_head() as u128 * seq_len as u128
}

/// Ratio of the `6N` estimate to three times the per-token forward count.
pub fn palm_ratio(config: &ModelConfig, seq_len: usize) -> f64 {
    palm_flops_per_token(config, seq_len) as f64 / (3 * forward_flops_per_token(config, seq_len)) as f64
}

/// Largest token count whose training cost fits in `budget`.
pub fn tokens_for_budget(config: &ModelConfig, budget: u128, seq_len: usize) -> Result<u128> {
    let per_token = 3 * forward_flops_per_token(config, seq_len);
    if per_token == 0 || budget < per_token {
        return Err(Error::BudgetTooSmall { budget, per_token });
    }
    Ok(budget / per_token)
}

/// CSV rows: config id, params, per-token forward, per-token training, PaLM ratio.
pub fn render_flops_table(configs: &[ModelConfig], seq_len: usize) -> String {
    let mut out = String::from("config_id,params,forward_flops_per_token,training_flops_per_token,palm_ratio\n");
    for c in configs {
        let f = forward_flops_per_token(c, seq_len);
        out.push_str(&format!("{},{},{},{},{:.6}\n", c.id(), count_params(c), f, 3 * f, palm_ratio(c, seq_len)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEFAULT_ROPE_BASE;

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 8,
            d_model: 4,
            n_layers: 1,
            n_heads: 1,
            n_kv_heads: 1,
            d_ff: 8,
            context_len: 16,
            rope_base: DEFAULT_ROPE_BASE,
        }
    }

    #[test]
    fn tiny_hand_sum() {
        // s = 2: q 64, kv 128, scores 32, softmax 12, sv 32, out 64, ffn 384, logits 128
        let f = forward_flops(&tiny(), 2);
        assert_eq!(f.attention_flops, 64 + 128 + 32 + 12 + 32 + 64);
        assert_eq!(f.dense_flops, 384);
        assert_eq!(f.logit_flops, 128);
        assert_eq!(f.embedding_flops, 0);
        assert_eq!(f.total_forward, 844);
        assert_eq!(f.per_token().total_forward, 422);
        assert_eq!(training_flops(&tiny(), 1, 2), 3 * 422);
        assert_eq!(forward_flops_with(&tiny(), 2, false).total_forward, 844 - 128);
    }

    #[test]
    fn sequence_scaling() {
        let c = tiny();
        let (a, b) = (forward_flops(&c, 64), forward_flops(&c, 128));
        assert!(b.attention_flops > 2 * a.attention_flops);
        assert_eq!(b.dense_flops, 2 * a.dense_flops);
        assert_eq!(b.logit_flops, 2 * a.logit_flops);
    }

    #[test]
    fn zero_layers_only_logits() {
        let c = ModelConfig { n_layers: 0, ..tiny() };
        let f = forward_flops(&c, 5);
        assert_eq!(f.total_forward, f.logit_flops);
        assert_eq!(f.logit_flops, 2 * 5 * 4 * 8);
    }

    #[test]
    fn palm_formula() {
        let c = tiny();
        assert_eq!(palm_flops_per_token(&c, 0), 6 * 236);
        assert_eq!(palm_flops_per_token(&c, 2), 6 * 236 + 12 * 4 * 2);
    }

    #[test]
    fn budget_inverse() {
        let c = tiny();
        let f = 3 * forward_flops_per_token(&c, 2);
        assert_eq!(tokens_for_budget(&c, f, 2).unwrap(), 1);
        assert!(tokens_for_budget(&c, f - 1, 2).is_err());
        assert_eq!(tokens_for_budget(&c, 2 * f, 2).unwrap(), 2);
        let big = ModelConfig::scaled(500, 128, 4, 2048);
        let per = 3 * forward_flops_per_token(&big, 2048);
        let budget = 1_000_000_000_000u128;
        let d = tokens_for_budget(&big, budget, 2048).unwrap();
        assert!(training_flops(&big, d, 2048) <= budget);
        assert!(budget - training_flops(&big, d, 2048) < per);
        assert!(training_flops(&big, d + 1, 2048) > budget);
    }

    #[test]
    fn table_has_one_row_per_config() {
        let t = render_flops_table(&[tiny(), ModelConfig { n_layers: 2, ..tiny() }], 2);
        assert_eq!(t.lines().count(), 3);
        assert!(t.lines().nth(1).unwrap().starts_with("d4-l1-h1-kv1-ff8,236,422,1266,"));
    }
}
