//! Decoder-only transformer: pre-norm RMSNorm, SwiGLU, rotary embeddings,
//! grouped-query attention, untied output head.

pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod infer;
pub mod kernels;
pub mod optim;
pub mod params;
pub mod sample;
pub mod scalar;
pub mod train;

pub use config::{count_params, default_grid, swiglu_width, ModelConfig, DEFAULT_CONTEXT_LEN, DEFAULT_ROPE_BASE};
pub use forward::{accumulate_gradients, backward, forward, forward_cache, nll_loss, sequence_loss, Logits};
pub use params::{init_params, ParameterSet, TensorRole};
pub use scalar::Scalar;
pub use infer::InferenceSession;
pub use optim::{default_peak_lr, AdamW, AdamWConfig, LrSchedule};
pub use sample::{sample_from_logits, sample_next};
pub use checkpoint::Checkpoint;
pub use train::{evaluate_loss, render_loss_curve, train, train_from, LossRecord, Split, StopRule, TrainConfig, TrainOutcome, TrainState};
