use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tokenizer::binner::BinnerRegistry;
use crate::tokenizer::event::{ClinicalEvent, EventKind, MINUTES_PER_YEAR, START_YEAR_CODE};
use crate::tokenizer::interval::{IntervalLadder, INTERVAL_TOKENS};
use crate::tokenizer::vocab::{age_bucket_token, quantile_token, year_bucket_token, TokenId, Vocabulary, VocabularyBuilder};

/// Maximum number of tokens a single event may produce.
pub const MAX_EVENT_TOKENS: usize = 7;
const MAX_CODE_LEVELS: usize = 3;

/// Tokenized form of one patient's history.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientTimeline {
    pub patient_id: String,
    pub tokens: Vec<TokenId>,
    /// Age in minutes for event tokens; `None` for static and interval tokens.
    pub token_ages: Vec<Option<f64>>,
    pub static_prefix_len: usize,
}

impl PatientTimeline {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Hierarchical prefixes of a code, at most three levels, deduplicated.
fn code_levels(code: &str, ladder: &[usize]) -> Vec<String> {
    let n = code.chars().count();
    let mut out: Vec<String> = ladder
        .iter()
        .filter(|&&len| len < n)
        .map(|&len| code.chars().take(len).collect())
        .collect();
    out.push(code.to_string());
    out.dedup();
    // keep the most specific levels if a custom ladder is deeper than allowed
    if out.len() > MAX_CODE_LEVELS {
        out.drain(..out.len() - MAX_CODE_LEVELS);
    }
    out
}

/// Token texts for one timed or static event (before vocabulary lookup).
///
/// `bin` is the quantile bin of the event's value, if any.
pub fn event_token_strings(event: &ClinicalEvent, bin: Option<usize>) -> Vec<String> {
    let kind = event.kind;
    let mut out = vec![kind.kind_token().to_string()];
    if kind.is_stay_marker() {
        return out;
    }
    if let Some((prefix, ladder)) = kind.code_system() {
        if !event.code.is_empty() {
            let code: String = event.code.chars().filter(|&c| c != '.').collect();
            out.extend(code_levels(&code, ladder).into_iter().map(|c| format!("{prefix}{c}")));
        }
    }
    if let Some(b) = bin {
        out.push(quantile_token(b));
    }
    debug_assert!(out.len() <= MAX_EVENT_TOKENS);
    out
}

fn event_bin(event: &ClinicalEvent, binners: &BinnerRegistry) -> Option<usize> {
    if !event.kind.is_numeric() {
        return None;
    }
    let value = event.value?;
    binners.lookup(event.kind, &event.code).map(|b| b.bin(value))
}

/// Tokenize one event into 1..=7 token ids.
pub fn tokenize_event(event: &ClinicalEvent, vocab: &Vocabulary, binners: &BinnerRegistry) -> Result<Vec<TokenId>> {
    if event.kind.is_numeric() && event.value.is_some() && binners.lookup(event.kind, &event.code).is_none() {
        return Err(Error::InvalidEvent(format!("no binner for {} {}", event.kind, event.code)));
    }
    event_token_strings(event, event_bin(event, binners))
        .iter()
        .map(|t| vocab.encode(t))
        .collect()
}

fn age_bucket(age_years: f64) -> Result<i64> {
    if !(age_years >= 0.0) || !age_years.is_finite() {
        return Err(Error::invalid(format!("age must be nonnegative, got {age_years}")));
    }
    Ok((age_years / 5.0).floor() as i64)
}

/// Static age-bucket and start-year-bucket tokens (5-year buckets).
pub fn encode_age_and_start_year(age_years: f64, start_year: i64, vocab: &Vocabulary) -> Result<[TokenId; 2]> {
    let age = vocab.encode(&age_bucket_token(age_bucket(age_years)?))?;
    let year = vocab.encode(&year_bucket_token(start_year.div_euclid(5)))?;
    Ok([age, year])
}

fn start_year(events: &[&ClinicalEvent]) -> Option<i64> {
    events
        .iter()
        .find(|e| e.code == START_YEAR_CODE)
        .and_then(|e| e.value)
        .map(|v| v.floor() as i64)
}

fn cmp_events(a: &ClinicalEvent, b: &ClinicalEvent) -> Ordering {
    let age = |e: &ClinicalEvent| e.age_minutes.unwrap_or(0.0);
    age(a)
        .total_cmp(&age(b))
        .then(a.kind.cmp(&b.kind))
        .then_with(|| a.code.cmp(&b.code))
        .then_with(|| match (a.value, b.value) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (x, y) => x.is_some().cmp(&y.is_some()),
        })
}

/// Index of the stay marker a leakage-prone event is attached to.
///
/// DRG codes belong to the discharge closing their stay; SOFA scores to the
/// ICU admission opening theirs. Unmatched events are dropped.
fn attachment(timed: &[&ClinicalEvent], idx: usize) -> Option<usize> {
    let last_before = |kind: EventKind| (0..idx).rev().find(|&j| timed[j].kind == kind);
    let first_after = |kind: EventKind| (idx + 1..timed.len()).find(|&j| timed[j].kind == kind);
    match timed[idx].kind {
        EventKind::DrgAssignment => {
            let prev_dis = last_before(EventKind::Discharge);
            let prev_adm = last_before(EventKind::Admission);
            match (prev_dis, prev_adm) {
                (Some(d), Some(a)) if a < d => Some(d),
                (Some(d), None) => Some(d),
                _ => first_after(EventKind::Discharge),
            }
        }
        EventKind::SofaScore => last_before(EventKind::IcuAdmission).or_else(|| first_after(EventKind::IcuAdmission)),
        _ => None,
    }
}

/// Assemble one patient's timeline.
///
/// Static tokens lead (demographics sorted by code, age bucket, start-year
/// bucket). Timed events follow in age order with ties broken by kind then
/// code; interval tokens fill gaps between consecutive distinct ages; DRG
/// tokens follow their discharge and SOFA tokens their ICU admission.
pub fn build_timeline(
    events: &[ClinicalEvent],
    vocab: &Vocabulary,
    binners: &BinnerRegistry,
    ladder: &IntervalLadder,
) -> Result<PatientTimeline> {
    let first = events.first().ok_or(Error::EmptyInput("patient events"))?;
    for e in events {
        if e.patient_id != first.patient_id {
            return Err(Error::MixedPatients { first: first.patient_id.clone(), other: e.patient_id.clone() });
        }
        e.validate()?;
    }

    let mut statics: Vec<&ClinicalEvent> = events.iter().filter(|e| e.is_static()).collect();
    statics.sort_by(|a, b| cmp_events(a, b));
    let mut timed: Vec<&ClinicalEvent> = events.iter().filter(|e| !e.is_static()).collect();
    timed.sort_by(|a, b| cmp_events(a, b));

    if let Some(death) = timed.iter().find(|e| e.kind == EventKind::Death) {
        let death_age = death.age_minutes.unwrap_or(0.0);
        if let Some(late) = timed.iter().find(|e| e.age_minutes.unwrap_or(0.0) > death_age) {
            return Err(Error::InvalidEvent(format!(
                "patient {}: {} event at {} after death at {death_age}",
                first.patient_id,
                late.kind,
                late.age_minutes.unwrap_or(0.0)
            )));
        }
    }

    let mut tokens = Vec::new();
    let mut ages = Vec::new();
    for e in statics.iter().filter(|e| e.code != START_YEAR_CODE) {
        for t in tokenize_event(e, vocab, binners)? {
            tokens.push(t);
            ages.push(None);
        }
    }
    if let Some(first_age) = timed.first().and_then(|e| e.age_minutes) {
        let age_years = first_age / MINUTES_PER_YEAR;
        tokens.push(vocab.encode(&age_bucket_token(age_bucket(age_years)?))?);
        ages.push(None);
    }
    if let Some(year) = start_year(&statics) {
        tokens.push(vocab.encode(&year_bucket_token(year.div_euclid(5)))?);
        ages.push(None);
    }
    let static_prefix_len = tokens.len();

    // attached[j] lists the auxiliary events emitted right after event j
    let mut attached: Vec<Vec<usize>> = vec![Vec::new(); timed.len()];
    let mut is_aux = vec![false; timed.len()];
    for i in 0..timed.len() {
        if matches!(timed[i].kind, EventKind::DrgAssignment | EventKind::SofaScore) {
            is_aux[i] = true;
            if let Some(anchor) = attachment(&timed, i) {
                attached[anchor].push(i);
            }
        }
    }

    let interval_ids = &vocab.specials().intervals;
    let mut prev_age: Option<f64> = None;
    for (j, e) in timed.iter().enumerate() {
        if is_aux[j] {
            continue;
        }
        let age = e.age_minutes.unwrap_or(0.0);
        if let Some(prev) = prev_age {
            if age > prev {
                for class in ladder.intervals_for_gap(age - prev)? {
                    tokens.push(interval_ids[class]);
                    ages.push(None);
                }
            }
        }
        prev_age = Some(age);
        for t in tokenize_event(e, vocab, binners)? {
            tokens.push(t);
            ages.push(Some(age));
        }
        for &a in &attached[j] {
            for t in tokenize_event(timed[a], vocab, binners)? {
                tokens.push(t);
                ages.push(Some(age));
            }
        }
    }

    Ok(PatientTimeline { patient_id: first.patient_id.clone(), tokens, token_ages: ages, static_prefix_len })
}

/// Group events by patient, keeping first-appearance order of patients.
pub fn group_by_patient(events: Vec<ClinicalEvent>) -> Vec<Vec<ClinicalEvent>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, Vec<ClinicalEvent>> = std::collections::HashMap::new();
    for e in events {
        if !groups.contains_key(&e.patient_id) {
            order.push(e.patient_id.clone());
        }
        groups.entry(e.patient_id.clone()).or_default().push(e);
    }
    order.into_iter().map(|id| groups.remove(&id).unwrap_or_default()).collect()
}

/// Vocabulary covering every token the given patients can produce.
pub fn build_vocabulary<'a>(
    patients: impl IntoIterator<Item = &'a [ClinicalEvent]>,
    bin_count: usize,
) -> Result<Vocabulary> {
    let mut builder = VocabularyBuilder::new(bin_count);
    builder.extend(INTERVAL_TOKENS.iter().map(|s| s.to_string()));
    for events in patients {
        let statics: Vec<&ClinicalEvent> = events.iter().filter(|e| e.is_static()).collect();
        for e in events {
            if e.is_static() && e.code == START_YEAR_CODE {
                continue;
            }
            builder.extend(event_token_strings(e, None));
        }
        if let Some(year) = start_year(&statics) {
            builder.insert(year_bucket_token(year.div_euclid(5)));
        }
        if let Some(first_age) = events.iter().filter_map(|e| e.age_minutes).min_by(f64::total_cmp) {
            builder.insert(age_bucket_token(age_bucket(first_age / MINUTES_PER_YEAR)?));
        }
    }
    builder.build()
}

/// Tokenize many patients in parallel; output order follows input order and
/// is identical to sequential tokenization.
pub fn tokenize_cohort(
    patients: &[Vec<ClinicalEvent>],
    vocab: &Vocabulary,
    binners: &BinnerRegistry,
    ladder: &IntervalLadder,
) -> Result<Vec<PatientTimeline>> {
    patients.par_iter().map(|events| build_timeline(events, vocab, binners, ladder)).collect()
}
