use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Batcher, TrainingExample};
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::forward::{accumulate_gradients, sequence_loss};
use crate::model::optim::{default_peak_lr, AdamW, AdamWConfig, LrSchedule};
use crate::model::params::{init_params, ParameterSet};
use crate::rng::{derive_seed, derived};

pub const DEFAULT_PATIENCE: usize = 5;
pub const MIN_VALIDATION_INTERVAL: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Train on this many predicted tokens, rounded down to whole batches.
    TokenBudget(u64),
    /// Stop after `patience` validations without improvement, or at `max_steps`.
    EarlyStop { max_steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub tokens_per_batch: usize,
    /// Defaults to [`default_peak_lr`] for the model width.
    pub peak_lr: Option<f64>,
    pub optimizer: AdamWConfig,
    pub seed: u64,
    pub stop: StopRule,
    pub patience: usize,
    /// Defaults to `max(50, total_steps / 100)`.
    pub val_every: Option<usize>,
    /// Validate on at most this many examples (taken in order).
    pub max_val_examples: Option<usize>,
}

impl TrainConfig {
    pub fn new(tokens_per_batch: usize, stop: StopRule, seed: u64) -> Self {
        TrainConfig {
            tokens_per_batch,
            peak_lr: None,
            optimizer: AdamWConfig::default(),
            seed,
            stop,
            patience: DEFAULT_PATIENCE,
            val_every: None,
            max_val_examples: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub split: Split,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub step: usize,
    pub optimizer: AdamW<f32>,
    pub best_val_loss: f64,
    pub best_step: usize,
    /// Consecutive validations without improvement.
    pub since_improvement: usize,
    pub history: Vec<LossRecord>,
}

impl TrainState {
    pub fn validation_curve(&self) -> impl Iterator<Item = &LossRecord> {
        self.history.iter().filter(|r| r.split == Split::Val)
    }

    pub fn train_curve(&self) -> impl Iterator<Item = &LossRecord> {
        self.history.iter().filter(|r| r.split == Split::Train)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// Final weights in budget mode; best-validation weights in early-stop mode.
    pub params: ParameterSet<f32>,
    /// Validation loss of `params`.
    pub val_loss: f64,
    pub tokens_processed: u64,
    pub epochs_started: usize,
}

/// Token-weighted mean next-token loss over `examples`.
pub fn evaluate_loss(params: &ParameterSet<f32>, examples: &[TrainingExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("evaluation examples"));
    }
    let parts: Vec<(f64, usize)> =
        examples.par_iter().map(|e| sequence_loss(params, &e.tokens)).collect::<Result<_>>()?;
    let (sum, n) = parts.iter().fold((0.0, 0), |(s, n), &(a, b)| (s + a, n + b));
    Ok(sum / n as f64)
}

fn predicted(e: &TrainingExample) -> u64 {
    e.len().saturating_sub(1) as u64
}

/// Trains a freshly initialised model.
pub fn train(
    model: &ModelConfig,
    train_set: &[TrainingExample],
    val_set: &[TrainingExample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let params = init_params::<f32>(model, derive_seed(cfg.seed, "model-init", 0))?;
    train_from(params, train_set, val_set, cfg)
}

/// Trains starting from `params`.
pub fn train_from(
    mut params: ParameterSet<f32>,
    train_set: &[TrainingExample],
    val_set: &[TrainingExample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let model = params.config.clone();
    if let Some(e) = train_set.iter().find(|e| e.len() < 2 || e.len() > model.context_len + 1) {
        return Err(Error::invalid(format!("training example of length {} for context {}", e.len(), model.context_len)));
    }
    let total_tokens: u64 = train_set.iter().map(predicted).sum();
    if total_tokens == 0 {
        return Err(Error::CorpusTooSmall("no trainable tokens".into()));
    }
    let mut batcher = Batcher::new(train_set, cfg.tokens_per_batch, derived(cfg.seed, "batches", 0))?;
    let val_set = &val_set[..cfg.max_val_examples.map_or(val_set.len(), |m| m.min(val_set.len()))];

    // budget mode plans every batch up front so the schedule knows its length
    let (plan, total_steps) = match cfg.stop {
        StopRule::TokenBudget(budget) => {
            let mut plan = Vec::new();
            let mut used = 0u64;
            loop {
                let b = batcher.next_batch();
                let n: u64 = b.iter().map(|&i| predicted(&train_set[i])).sum();
                if used + n > budget || n == 0 {
                    break;
                }
                used += n;
                plan.push(b);
            }
            if plan.is_empty() {
                return Err(Error::CorpusTooSmall(format!(
                    "token budget {budget} is smaller than one batch"
                )));
            }
            let steps = plan.len();
            (Some(plan), steps)
        }
        StopRule::EarlyStop { max_steps } => {
            if val_set.is_empty() {
                return Err(Error::EmptyInput("validation set for early stopping"));
            }
            if max_steps == 0 {
                return Err(Error::invalid("max_steps must be positive"));
            }
            (None, max_steps)
        }
    };
    let epochs_planned = batcher.epoch();
    if plan.is_some() {
        // replay from the start with the same stream
        batcher = Batcher::new(train_set, cfg.tokens_per_batch, derived(cfg.seed, "batches", 0))?;
    }

    let peak = cfg.peak_lr.unwrap_or_else(|| default_peak_lr(model.d_model));
    let schedule = LrSchedule::standard(peak, total_steps);
    let val_every = cfg.val_every.unwrap_or((total_steps / 100).max(MIN_VALIDATION_INTERVAL)).max(1);
    let mut state = TrainState {
        step: 0,
        optimizer: AdamW::new(&params, cfg.optimizer),
        best_val_loss: f64::INFINITY,
        best_step: 0,
        since_improvement: 0,
        history: Vec::new(),
    };
    let mut best_params = None;
    let mut grads = params.zeros_like();
    let mut tokens_processed = 0u64;
    let early = matches!(cfg.stop, StopRule::EarlyStop { .. });

    while state.step < total_steps {
        let batch = match &plan {
            Some(p) => p[state.step].clone(),
            None => batcher.next_batch(),
        };
        grads.fill(0.0);
        let n: u64 = batch.iter().map(|&i| predicted(&train_set[i])).sum();
        let scale = 1.0 / n as f32;
        let mut loss = 0.0;
        for &i in &batch {
            let t = &train_set[i].tokens;
            loss += accumulate_gradients(&params, &t[..t.len() - 1], &t[1..], scale, &mut grads)?;
        }
        state.optimizer.step(&mut params, &mut grads, schedule.lr(state.step), state.step)?;
        state.history.push(LossRecord { step: state.step, split: Split::Train, loss: loss / n as f64 });
        tokens_processed += n;
        state.step += 1;

        let last = state.step == total_steps;
        if !val_set.is_empty() && (state.step % val_every == 0 || last) {
            let v = evaluate_loss(&params, val_set)?;
            state.history.push(LossRecord { step: state.step, split: Split::Val, loss: v });
            if v < state.best_val_loss {
                state.best_val_loss = v;
                state.best_step = state.step;
                state.since_improvement = 0;
                if early {
                    best_params = Some(params.clone());
                }
            } else {
                state.since_improvement += 1;
                if early && state.since_improvement >= cfg.patience.max(1) {
                    break;
                }
            }
        }
    }

    let epochs_started = if plan.is_some() { epochs_planned + 1 } else { batcher.epoch() + 1 };
    let (params, val_loss) = match best_params {
        Some(p) => (p, state.best_val_loss),
        None => {
            let v = state.validation_curve().last().map_or(f64::NAN, |r| r.loss);
            (params, v)
        }
    };
    Ok(TrainOutcome { state, params, val_loss, tokens_processed, epochs_started })
}

/// Loss curve as CSV with columns `step,split,loss`.
pub fn render_loss_curve(history: &[LossRecord]) -> String {
    let mut out = String::from("step,split,loss\n");
    for r in history {
        out.push_str(&format!("{},{},{}\n", r.step, r.split, r.loss));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::DEFAULT_ROPE_BASE;
    use crate::tokenizer::TokenId;

    fn cfg(vocab: usize, d: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab,
            d_model: d,
            n_layers: 1,
            n_heads: 2,
            n_kv_heads: 1,
            d_ff: 2 * d,
            context_len: 32,
            rope_base: DEFAULT_ROPE_BASE,
        }
    }

    fn example(tokens: Vec<u32>) -> TrainingExample {
        TrainingExample { patient_id: "p".into(), tokens: tokens.into_iter().map(TokenId).collect() }
    }

    #[test]
    fn memorises_alternating_sequence() {
        let ex = example((0..32).map(|i| i % 2).collect());
        let mut tc = TrainConfig::new(64, StopRule::EarlyStop { max_steps: 500 }, 0);
        tc.peak_lr = Some(1e-2);
        tc.val_every = Some(10_000);
        tc.stop = StopRule::TokenBudget(31 * 500);
        let out = train(&cfg(4, 16), &[ex.clone()], &[ex], &tc).unwrap();
        assert_eq!(out.state.step, 500);
        let last = out.state.train_curve().last().unwrap().loss;
        assert!(last < 0.01, "final loss {last}");
    }

    #[test]
    fn budget_counts_whole_batches() {
        let exs: Vec<_> = (0..10).map(|k| example((0..20).map(|i| (i * k) % 7).collect())).collect();
        // 19 predicted tokens per example; batches of 3, 3, 3, 1 per epoch
        let tc = TrainConfig::new(60, StopRule::TokenBudget(180), 1);
        let out = train(&cfg(7, 8), &exs, &exs[..2], &tc).unwrap();
        assert_eq!(out.tokens_processed, 3 * 57);
        assert_eq!(out.state.step, 3);
        let tc = TrainConfig::new(60, StopRule::TokenBudget(200), 1);
        let out = train(&cfg(7, 8), &exs, &exs[..2], &tc).unwrap();
        assert_eq!(out.tokens_processed, 3 * 57 + 19);
        assert!(out.tokens_processed <= 200);
        let tc = TrainConfig::new(60, StopRule::TokenBudget(10), 1);
        assert!(matches!(train(&cfg(7, 8), &exs, &exs, &tc), Err(Error::CorpusTooSmall(_))));
    }

    #[test]
    fn deterministic_curves() {
        let exs: Vec<_> = (0..6).map(|k| example((0..16).map(|i| (i + k) % 5).collect())).collect();
        let mut tc = TrainConfig::new(32, StopRule::TokenBudget(300), 4);
        tc.val_every = Some(2);
        let a = train(&cfg(5, 8), &exs, &exs[..2], &tc).unwrap();
        let b = train(&cfg(5, 8), &exs, &exs[..2], &tc).unwrap();
        assert_eq!(a.state.history, b.state.history);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn early_stop_returns_argmin_checkpoint() {
        // validation data drawn from a different pattern so it eventually overfits
        let train_ex: Vec<_> = (0..4).map(|_| example((0..24).map(|i| (i % 3) as u32).collect())).collect();
        let val_ex = vec![example((0..24).map(|i| ((i * 5 + 1) % 6) as u32).collect())];
        let mut tc = TrainConfig::new(48, StopRule::EarlyStop { max_steps: 400 }, 2);
        tc.val_every = Some(5);
        tc.peak_lr = Some(1e-2);
        tc.patience = 3;
        let out = train(&cfg(6, 8), &train_ex, &val_ex, &tc).unwrap();
        let curve: Vec<_> = out.state.validation_curve().cloned().collect();
        let argmin = curve.iter().min_by(|a, b| a.loss.total_cmp(&b.loss)).unwrap();
        assert_eq!(out.val_loss, argmin.loss);
        assert_eq!(out.state.best_step, argmin.step);
        let recomputed = evaluate_loss(&out.params, &val_ex).unwrap();
        assert!((recomputed - argmin.loss).abs() < 1e-9);
        if out.state.step < 400 {
            assert_eq!(out.state.since_improvement, 3);
        }
    }

    #[test]
    fn loss_curve_csv() {
        let h = [LossRecord { step: 1, split: Split::Train, loss: 2.5 }, LossRecord { step: 1, split: Split::Val, loss: 3.0 }];
        assert_eq!(render_loss_curve(&h), "step,split,loss\n1,train,2.5\n1,val,3\n");
    }
}
