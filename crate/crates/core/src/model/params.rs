use std::ops::Range;

use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::model::config::{count_params, ModelConfig};
use crate::model::scalar::Scalar;
use crate::rng::derived;

/// Standard deviation of freshly initialised weights.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    Embedding,
    /// RMS-norm gain; exempt from weight decay.
    NormGain,
    Matrix,
    /// Projection feeding a residual branch (attention output, SwiGLU down).
    ResidualOut,
    Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub role: TensorRole,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of one transformer block's tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerOffsets {
    pub attn_norm: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub ffn_norm: usize,
    pub w_gate: usize,
    pub w_up: usize,
    pub w_down: usize,
}

/// Flat-buffer layout in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub embed: usize,
    pub layers: Vec<LayerOffsets>,
    pub final_norm: usize,
    pub head: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut add = |name: String, rows: usize, cols: usize, role: TensorRole| {
            let o = offset;
            tensors.push(TensorSpec { name, rows, cols, offset: o, role });
            offset += rows * cols;
            o
        };
        let (d, q, kv, ff, v) = (c.d_model, c.q_dim(), c.kv_dim(), c.d_ff, c.vocab_size);
        let embed = add("embed".into(), v, d, TensorRole::Embedding);
        let mut layers = Vec::with_capacity(c.n_layers);
        for l in 0..c.n_layers {
            layers.push(LayerOffsets {
                attn_norm: add(format!("layer{l}.attn_norm"), 1, d, TensorRole::NormGain),
                wq: add(format!("layer{l}.wq"), q, d, TensorRole::Matrix),
                wk: add(format!("layer{l}.wk"), kv, d, TensorRole::Matrix),
                wv: add(format!("layer{l}.wv"), kv, d, TensorRole::Matrix),
                wo: add(format!("layer{l}.wo"), d, q, TensorRole::ResidualOut),
                ffn_norm: add(format!("layer{l}.ffn_norm"), 1, d, TensorRole::NormGain),
                w_gate: add(format!("layer{l}.w_gate"), ff, d, TensorRole::Matrix),
                w_up: add(format!("layer{l}.w_up"), ff, d, TensorRole::Matrix),
                w_down: add(format!("layer{l}.w_down"), d, ff, TensorRole::ResidualOut),
            });
        }
        let final_norm = add("final_norm".into(), 1, d, TensorRole::NormGain);
        let head = add("head".into(), v, d, TensorRole::Head);
        Layout { tensors, embed, layers, final_norm, head, total: offset }
    }
}

/// All weights of one model in a single flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub data: Vec<T>,
}

impl<T: Scalar> ParameterSet<T> {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        debug_assert_eq!(layout.total as u64, count_params(config));
        Ok(ParameterSet { config: config.clone(), data: vec![T::zero(); layout.total], layout })
    }

    /// Same layout, all zeros (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        ParameterSet { config: self.config.clone(), layout: self.layout.clone(), data: vec![T::zero(); self.data.len()] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout.tensors.iter().find(|t| t.name == name).map(|t| &self.data[t.range()])
    }

    pub fn slice(&self, offset: usize, len: usize) -> &[T] {
        &self.data[offset..offset + len]
    }

    pub fn slice_mut(&mut self, offset: usize, len: usize) -> &mut [T] {
        &mut self.data[offset..offset + len]
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn scale(&mut self, factor: T) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        ParameterSet {
            config: self.config.clone(),
            layout: self.layout.clone(),
            data: self.data.iter().map(|&x| U::of(x.f64())).collect(),
        }
    }
}

/// Random initialisation: N(0, 0.02^2) weights, residual-branch output
/// projections scaled by `1/sqrt(2 * n_layers)`, norm gains at one.
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ParameterSet<T>> {
    let mut p = ParameterSet::<T>::zeros(config)?;
    let residual_scale = 1.0 / (2.0 * config.n_layers.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    // per-tensor streams so adding a layer does not reshuffle earlier tensors
    for (i, spec) in p.layout.tensors.clone().iter().enumerate() {
        let mut rng = derived(seed, "init", i as u64);
        let out = &mut p.data[spec.range()];
        match spec.role {
            TensorRole::NormGain => out.iter_mut().for_each(|x| *x = T::one()),
            role => {
                let scale = if role == TensorRole::ResidualOut { residual_scale } else { 1.0 };
                for x in out.iter_mut() {
                    *x = T::of(normal.sample(&mut rng) * scale);
                }
            }
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::DEFAULT_ROPE_BASE;

    fn cfg(vocab: usize, d: usize, layers: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab,
            d_model: d,
            n_layers: layers,
            n_heads: 2,
            n_kv_heads: 1,
            d_ff: 3 * d,
            context_len: 32,
            rope_base: DEFAULT_ROPE_BASE,
        }
    }

    #[test]
    fn layout_matches_count() {
        for c in [cfg(8, 4, 0), cfg(8, 4, 1), cfg(50, 16, 3)] {
            let p = init_params::<f32>(&c, 0).unwrap();
            assert_eq!(p.len() as u64, count_params(&c));
            let sum: usize = p.layout.tensors.iter().map(TensorSpec::len).sum();
            assert_eq!(sum, p.len());
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let c = cfg(30, 8, 2);
        let a = init_params::<f32>(&c, 7).unwrap();
        let b = init_params::<f32>(&c, 7).unwrap();
        assert_eq!(a.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_ne!(a, init_params::<f32>(&c, 8).unwrap());
    }

    #[test]
    fn norm_gains_are_one() {
        let p = init_params::<f64>(&cfg(30, 8, 2), 1).unwrap();
        for t in p.layout.tensors.iter().filter(|t| t.role == TensorRole::NormGain) {
            assert!(p.data[t.range()].iter().all(|&x| x == 1.0), "{}", t.name);
        }
    }

    #[test]
    fn embedding_std_near_init_std() {
        let p = init_params::<f64>(&cfg(1000, 16, 1), 3).unwrap();
        let e = p.tensor("embed").unwrap();
        assert!(e.len() >= 10_000);
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let std = (e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / e.len() as f64).sqrt();
        assert!((std - 0.02).abs() < 0.02 * 0.05, "std {std}");
    }

    #[test]
    fn residual_outputs_are_scaled() {
        let c = cfg(200, 64, 8);
        let p = init_params::<f64>(&c, 3).unwrap();
        let std = |name: &str| {
            let t = p.tensor(name).unwrap();
            (t.iter().map(|x| x * x).sum::<f64>() / t.len() as f64).sqrt()
        };
        let expected = 0.02 / 4.0;
        assert!((std("layer0.w_down") - expected).abs() < expected * 0.1);
        assert!((std("layer0.wq") - 0.02).abs() < 0.002);
    }
}
