//! Zero-shot risk estimation by Monte-Carlo trajectory rollout.

pub mod estimate;
pub mod labels;
pub mod rollout;

pub use estimate::{
    estimate_icu_mortality, estimate_readmission_30d, estimate_risk, render_scored_csv, rollout_outcomes, score_cohort,
    to_metrics_cohort, EvalCase, RiskEstimate, ScoredPatient, SCORED_HEADER,
};
pub use labels::{
    anchor_token, context_before, extract_label, parse_labels_csv, prefix_for_task, render_labels_csv, TaskLabel,
};
pub use rollout::{
    simulate_rollout, ModelSampler, RolloutConfig, SamplerState, StopRules, StubSampler, Task, Terminal, TokenRoles,
    TokenSampler, TrajectoryOutcome, READMISSION_WINDOW_MINUTES,
};
