use crate::error::{Error, Result};
use crate::tokenizer::{PatientTimeline, TokenId};
use crate::zero_shot::rollout::{Task, TokenRoles, READMISSION_WINDOW_MINUTES};

/// Ground truth for one patient and task, tied to the anchor token position.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskLabel {
    pub patient_id: String,
    pub task: Task,
    pub anchor: usize,
    pub label: bool,
}

pub fn anchor_token(task: Task, roles: &TokenRoles) -> TokenId {
    match task {
        Task::IcuMortality => roles.icu_admission,
        Task::Readmission30d => roles.discharge,
    }
}

/// Tokens up to and including `anchor`, truncated to the last `window`.
pub fn context_before(tokens: &[TokenId], anchor: usize, window: usize) -> Result<&[TokenId]> {
    if anchor >= tokens.len() {
        return Err(Error::invalid(format!("anchor {anchor} beyond timeline of {} tokens", tokens.len())));
    }
    let end = anchor + 1;
    Ok(&tokens[end.saturating_sub(window)..end])
}

/// Context ending at the last anchor token of the task.
pub fn prefix_for_task<'t>(timeline: &'t PatientTimeline, task: Task, roles: &TokenRoles, window: usize) -> Result<&'t [TokenId]> {
    let anchor = anchor_token(task, roles);
    let pos = timeline
        .tokens
        .iter()
        .rposition(|&t| t == anchor)
        .ok_or_else(|| Error::AnchorAbsent(format!("{} ({})", timeline.patient_id, task)))?;
    context_before(&timeline.tokens, pos, window)
}

/// Label at the last anchor whose outcome the timeline determines.
///
/// Mortality: the first of death, ICU discharge or hospital discharge after
/// the ICU admission decides; death means label 1. Readmission: an admission
/// within 30 days of the discharge means label 1; a later admission, a
/// death, or 30 days of further observation means 0. Anchors whose outcome
/// is cut off by the end of the record are passed over.
pub fn extract_label(timeline: &PatientTimeline, task: Task, roles: &TokenRoles) -> Option<TaskLabel> {
    let toks = &timeline.tokens;
    let anchor = anchor_token(task, roles);
    let last_age = timeline.token_ages.iter().rev().find_map(|a| *a);
    for i in (0..toks.len()).rev().filter(|&i| toks[i] == anchor) {
        let label = match task {
            Task::IcuMortality => toks[i + 1..].iter().find_map(|&t| {
                if t == roles.death {
                    Some(true)
                } else if t == roles.icu_discharge || t == roles.discharge {
                    Some(false)
                } else {
                    None
                }
            }),
            Task::Readmission30d => {
                let Some(age) = timeline.token_ages[i] else { continue };
                let next = (i + 1..toks.len()).find(|&j| toks[j] == roles.admission || toks[j] == roles.death);
                match next {
                    Some(j) if toks[j] == roles.admission => {
                        let gap = timeline.token_ages[j].map_or(f64::INFINITY, |a| a - age);
                        Some(gap <= READMISSION_WINDOW_MINUTES)
                    }
                    Some(_) => Some(false),
                    None => match last_age {
                        Some(end) if end - age >= READMISSION_WINDOW_MINUTES => Some(false),
                        _ => None,
                    },
                }
            }
        };
        if let Some(label) = label {
            return Some(TaskLabel { patient_id: timeline.patient_id.clone(), task, anchor: i, label });
        }
    }
    None
}

pub const LABELS_HEADER: &str = "patient_id,task,anchor,label";

pub fn render_labels_csv(labels: &[TaskLabel]) -> String {
    let mut out = format!("{LABELS_HEADER}\n");
    for l in labels {
        out.push_str(&format!("{},{},{},{}\n", l.patient_id, l.task, l.anchor, l.label as u8));
    }
    out
}

pub fn parse_labels_csv(text: &str) -> Result<Vec<TaskLabel>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != LABELS_HEADER {
                return Err(Error::Parse { line: 1, message: format!("expected header {LABELS_HEADER:?}") });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: &str| Error::Parse { line: i + 1, message: m.to_string() };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(err("expected 4 fields"));
        }
        out.push(TaskLabel {
            patient_id: f[0].to_string(),
            task: f[1].parse().map_err(|_| err("bad task"))?,
            anchor: f[2].parse().map_err(|_| err("bad anchor"))?,
            label: match f[3] {
                "0" => false,
                "1" => true,
                _ => return Err(err("label must be 0 or 1")),
            },
        });
    }
    Ok(out)
}
