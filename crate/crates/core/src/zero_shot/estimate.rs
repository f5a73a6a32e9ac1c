use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::ScoredCohort;
use crate::rng::derived;
use crate::tokenizer::{PatientTimeline, TokenId};
use crate::zero_shot::labels::{context_before, prefix_for_task};
use crate::zero_shot::rollout::{
    simulate_rollout, RolloutConfig, Task, Terminal, TokenRoles, TokenSampler, TrajectoryOutcome,
};

/// `event_count / rollout_count`; censored rollouts count as non-events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub probability: f64,
    pub event_count: usize,
    pub rollout_count: usize,
    pub censored_count: usize,
}

/// Runs `n_rollouts` independent trajectories from `context`. Rollout `r`
/// uses a seed derived from `(seed, task/patient, r)`, so results do not
/// depend on scheduling.
pub fn rollout_outcomes<S: TokenSampler + ?Sized>(
    sampler: &S,
    roles: &TokenRoles,
    context: &[TokenId],
    task: Task,
    patient_id: &str,
    cfg: &RolloutConfig,
) -> Result<Vec<TrajectoryOutcome>> {
    cfg.validate()?;
    let context = &context[context.len().saturating_sub(cfg.context_window)..];
    let base = sampler.begin(context)?;
    let rules = task.stop_rules();
    let label = format!("{task}/{patient_id}");
    (0..cfg.n_rollouts)
        .map(|r| {
            let mut state = base.fork();
            let mut rng = derived(cfg.seed, &label, r as u64);
            simulate_rollout(state.as_mut(), roles, &rules, cfg.max_generated_tokens, &mut rng)
        })
        .collect()
}

/// Share of [`rollout_outcomes`] ending in the task's event; censored
/// rollouts count as non-events.
pub fn estimate_risk<S: TokenSampler + ?Sized>(
    sampler: &S,
    roles: &TokenRoles,
    context: &[TokenId],
    task: Task,
    patient_id: &str,
    cfg: &RolloutConfig,
) -> Result<RiskEstimate> {
    let outcomes = rollout_outcomes(sampler, roles, context, task, patient_id, cfg)?;
    let events = outcomes.iter().filter(|o| o.terminal == task.event()).count();
    let censored = outcomes.iter().filter(|o| o.terminal == Terminal::Censored).count();
    Ok(RiskEstimate {
        probability: events as f64 / cfg.n_rollouts as f64,
        event_count: events,
        rollout_count: cfg.n_rollouts,
        censored_count: censored,
    })
}

/// Probability of death before discharge, from the last ICU admission.
pub fn estimate_icu_mortality<S: TokenSampler + ?Sized>(
    sampler: &S,
    roles: &TokenRoles,
    timeline: &PatientTimeline,
    cfg: &RolloutConfig,
) -> Result<RiskEstimate> {
    let ctx = prefix_for_task(timeline, Task::IcuMortality, roles, cfg.context_window)?;
    estimate_risk(sampler, roles, ctx, Task::IcuMortality, &timeline.patient_id, cfg)
}

/// Probability of an admission within 30 simulated days of the last discharge.
pub fn estimate_readmission_30d<S: TokenSampler + ?Sized>(
    sampler: &S,
    roles: &TokenRoles,
    timeline: &PatientTimeline,
    cfg: &RolloutConfig,
) -> Result<RiskEstimate> {
    let ctx = prefix_for_task(timeline, Task::Readmission30d, roles, cfg.context_window)?;
    estimate_risk(sampler, roles, ctx, Task::Readmission30d, &timeline.patient_id, cfg)
}

/// A held-out patient with its anchor position and ground truth.
#[derive(Debug, Clone, Copy)]
pub struct EvalCase<'a> {
    pub patient_id: &'a str,
    pub tokens: &'a [TokenId],
    pub anchor: usize,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPatient {
    pub patient_id: String,
    pub task: Task,
    pub estimate: RiskEstimate,
    pub label: bool,
}

/// Scores every case in parallel; output order follows input order.
pub fn score_cohort<S: TokenSampler + ?Sized>(
    sampler: &S,
    roles: &TokenRoles,
    cases: &[EvalCase<'_>],
    task: Task,
    cfg: &RolloutConfig,
) -> Result<Vec<ScoredPatient>> {
    if cases.is_empty() {
        return Err(Error::EmptyInput("eligible patients"));
    }
    cases
        .par_iter()
        .map(|c| {
            let ctx = context_before(c.tokens, c.anchor, cfg.context_window)?;
            let estimate = estimate_risk(sampler, roles, ctx, task, c.patient_id, cfg)?;
            Ok(ScoredPatient { patient_id: c.patient_id.to_string(), task, estimate, label: c.label })
        })
        .collect()
}

pub fn to_metrics_cohort(scored: &[ScoredPatient]) -> Result<ScoredCohort> {
    ScoredCohort::new(scored.iter().map(|s| s.estimate.probability).collect(), scored.iter().map(|s| s.label).collect())
}

pub const SCORED_HEADER: &str = "patient_id,task,score,label,censored_count";

pub fn render_scored_csv(scored: &[ScoredPatient]) -> String {
    let mut out = format!("{SCORED_HEADER}\n");
    for s in scored {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.patient_id, s.task, s.estimate.probability, s.label as u8, s.estimate.censored_count
        ));
    }
    out
}
