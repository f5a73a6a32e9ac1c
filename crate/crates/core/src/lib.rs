//! Desk-scale harness for studying compute-optimal scaling of autoregressive
//! models trained on tokenized electronic-health-record timelines.
//!
//! The pipeline runs from raw age-stamped clinical events to fitted scaling
//! laws and zero-shot risk estimates:
//!
//! * [`tokenizer`] turns events into token timelines (quantile bins,
//!   interval tokens, hierarchical codes, leakage-safe placement).
//! * [`corpus`] generates synthetic cohorts, splits patients, segments
//!   timelines without crossing patient boundaries and persists token streams.
//! * [`model`] is a from-scratch decoder-only transformer (RMS pre-norm,
//!   SwiGLU, rotary embeddings, grouped-query attention) with training and
//!   sampling.
//! * [`flops`] does exact integer FLOPs accounting.
//! * [`isoflop`] runs fixed-compute sweeps and fits parabolas and power laws.
//! * [`zero_shot`] estimates clinical risks by Monte-Carlo trajectory rollout.
//! * [`metrics`] computes ROC/PR statistics with bootstrap intervals.
//! * [`pipeline`] chains splitting, binning, tokenization and segmentation.
//! * [`report`] writes CSV tables, SVG plots and run manifests.
//! * [`cli`] is the `ehr-scaling` command-line front end.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod flops;
pub mod isoflop;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod tokenizer;
pub mod zero_shot;

pub use error::{Error, Result};
