//! Per-command TOML configuration. Every field has a default; a config file
//! overrides defaults and command-line flags override the file.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AdamWConfig, ModelConfig, StopRule, TrainConfig};
use crate::zero_shot::RolloutConfig;

/// Parses a TOML file, returning the value and the raw text (for digests).
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<(T, Option<String>)> {
    let Some(path) = path else { return Ok((T::default(), None)) };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value = toml::from_str(&text)
        .map_err(|e| Error::Format { what: "config", message: format!("{}: {e}", path.display()) })?;
    Ok((value, Some(text)))
}

/// Desk-scale model grid: widths 4 to 24 at depth 2.
pub const DESK_GRID: [(usize, usize); 5] = [(4, 2), (8, 2), (12, 2), (16, 2), (24, 2)];
pub const DESK_CONTEXT: usize = 256;
pub const DESK_TOKENS_PER_BATCH: usize = 256;
pub const DESK_BUDGETS: [f64; 3] = [2.8e9, 4.5e9, 7.0e9];
pub const DESK_MAX_VAL_EXAMPLES: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub d_model: usize,
    pub n_layers: usize,
    /// Derived from the width when absent.
    pub n_heads: Option<usize>,
    pub n_kv_heads: Option<usize>,
    pub d_ff: Option<usize>,
    pub context_len: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec { d_model: 16, n_layers: 2, n_heads: None, n_kv_heads: None, d_ff: None, context_len: DESK_CONTEXT }
    }
}

impl ModelSpec {
    pub fn build(&self, vocab_size: usize) -> Result<ModelConfig> {
        let mut c = ModelConfig::scaled(vocab_size, self.d_model, self.n_layers, self.context_len);
        if let Some(h) = self.n_heads {
            c.n_heads = h;
            c.n_kv_heads = self.n_kv_heads.unwrap_or(h);
        } else if let Some(kv) = self.n_kv_heads {
            c.n_kv_heads = kv;
        }
        if let Some(ff) = self.d_ff {
            c.d_ff = ff;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub tokens_per_batch: usize,
    pub peak_lr: Option<f64>,
    pub weight_decay: f64,
    pub max_val_examples: Option<usize>,
    pub val_every: Option<usize>,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            tokens_per_batch: DESK_TOKENS_PER_BATCH,
            peak_lr: None,
            weight_decay: AdamWConfig::default().weight_decay,
            max_val_examples: Some(DESK_MAX_VAL_EXAMPLES),
            val_every: None,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainSettings {
    pub fn to_train_config(&self, stop: StopRule) -> TrainConfig {
        let mut c = TrainConfig::new(self.tokens_per_batch, stop, self.seed);
        c.peak_lr = self.peak_lr;
        c.optimizer.weight_decay = self.weight_decay;
        c.max_val_examples = self.max_val_examples;
        c.val_every = self.val_every;
        c.patience = self.patience;
        c
    }
}

/// `train` command. Exactly one of the three stopping fields applies; the
/// FLOPs budget wins over the token budget, which wins over early stopping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCommandConfig {
    pub model: ModelSpec,
    pub train: TrainSettings,
    pub flops_budget: Option<f64>,
    pub token_budget: Option<u64>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEntry {
    pub d_model: usize,
    pub n_layers: usize,
}

/// `isoflop` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub budgets: Vec<f64>,
    pub grid: Vec<GridEntry>,
    pub context_len: usize,
    /// Sequence length for FLOPs accounting; the context length when absent.
    pub flops_seq_len: Option<usize>,
    /// Lowest-loss points kept per budget for the parabola.
    pub retained: usize,
    pub save_checkpoints: bool,
    pub train: TrainSettings,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            budgets: DESK_BUDGETS.to_vec(),
            grid: DESK_GRID.iter().map(|&(d_model, n_layers)| GridEntry { d_model, n_layers }).collect(),
            context_len: DESK_CONTEXT,
            flops_seq_len: None,
            retained: 5,
            save_checkpoints: true,
            train: TrainSettings::default(),
        }
    }
}

impl SweepConfig {
    pub fn build_grid(&self, vocab_size: usize) -> Result<Vec<ModelConfig>> {
        self.grid
            .iter()
            .map(|g| {
                let c = ModelConfig::scaled(vocab_size, g.d_model, g.n_layers, self.context_len);
                c.validate()?;
                Ok(c)
            })
            .collect()
    }

    pub fn budgets_u128(&self) -> Result<Vec<u128>> {
        self.budgets
            .iter()
            .map(|&b| {
                if b.is_finite() && b >= 1.0 {
                    Ok(b as u128)
                } else {
                    Err(Error::invalid(format!("budget {b} must be at least 1 FLOP")))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub rollout: RolloutConfig,
    pub bootstrap_resamples: usize,
    pub confidence_level: f64,
    /// Score at most this many labelled patients (in label order).
    pub max_patients: Option<usize>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            rollout: RolloutConfig { context_window: DESK_CONTEXT, max_generated_tokens: 512, ..RolloutConfig::default() },
            bootstrap_resamples: 1000,
            confidence_level: 0.95,
            max_patients: None,
        }
    }
}
