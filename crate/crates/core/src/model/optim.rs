use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::params::{ParameterSet, TensorRole};
use crate::model::scalar::Scalar;

/// Peak learning rate heuristic: `3e-3 * 64 / d_model`.
pub fn default_peak_lr(d_model: usize) -> f64 {
    3e-3 * 64.0 / d_model as f64
}

/// Linear warmup followed by cosine decay to a floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak: f64,
    pub floor: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    /// Warmup over 1% of steps (at least one), floor at 10% of peak.
    pub fn standard(peak: f64, total_steps: usize) -> Self {
        LrSchedule { peak, floor: 0.1 * peak, warmup_steps: (total_steps / 100).max(1), total_steps }
    }

    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.peak * step as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let progress = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        self.floor + (self.peak - self.floor) * (1.0 + (std::f64::consts::PI * progress).cos()) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub clip_norm: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { beta1: 0.9, beta2: 0.95, eps: 1e-8, weight_decay: 0.1, clip_norm: 1.0 }
    }
}

/// First and second moments plus the update counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
    decay_mask: Vec<bool>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: &ParameterSet<T>, config: AdamWConfig) -> Self {
        let mut decay_mask = vec![true; params.len()];
        for spec in &params.layout.tensors {
            if spec.role == TensorRole::NormGain {
                decay_mask[spec.range()].iter_mut().for_each(|x| *x = false);
            }
        }
        AdamW { config, m: vec![T::zero(); params.len()], v: vec![T::zero(); params.len()], t: 0, decay_mask }
    }

    /// One decoupled-weight-decay update. Returns the pre-clip gradient norm.
    pub fn step(&mut self, params: &mut ParameterSet<T>, grads: &mut ParameterSet<T>, lr: f64, step: usize) -> Result<f64> {
        if grads.len() != params.len() || params.len() != self.m.len() {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        let norm = gradient_norm(grads, step)?;
        if self.config.clip_norm > 0.0 && norm > self.config.clip_norm {
            grads.scale(T::of(self.config.clip_norm / norm));
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let step_size = T::of(lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(c.eps);
        let decay = T::of(1.0 - lr * c.weight_decay);
        for i in 0..params.len() {
            let g = grads.data[i];
            let m = b1 * self.m[i] + one_b1 * g;
            let v = b2 * self.v[i] + one_b2 * g * g;
            self.m[i] = m;
            self.v[i] = v;
            let p = &mut params.data[i];
            if self.decay_mask[i] {
                *p *= decay;
            }
            *p -= step_size * m / ((v * inv_bc2).sqrt() + eps);
        }
        Ok(norm)
    }
}

/// Global L2 norm; names the first tensor holding a non-finite entry.
pub fn gradient_norm<T: Scalar>(grads: &ParameterSet<T>, step: usize) -> Result<f64> {
    let mut sum = 0.0f64;
    for spec in &grads.layout.tensors {
        let part: f64 = grads.data[spec.range()].iter().map(|x| x.f64() * x.f64()).sum();
        if !part.is_finite() {
            return Err(Error::NonFiniteGradient { tensor: spec.name.clone(), step });
        }
        sum += part;
    }
    Ok(sum.sqrt())
}
