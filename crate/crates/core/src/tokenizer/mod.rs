//! Event tokenization: age-ordered clinical events become token timelines.

pub mod binner;
pub mod event;
pub mod interval;
pub mod io;
pub mod timeline;
pub mod vocab;

pub use binner::{fit_quantile_binner, BinnerRegistry, QuantileBinner, DEFAULT_BIN_COUNT, DEFAULT_MIN_GROUP_SIZE};
pub use event::{ClinicalEvent, EventKind, MINUTES_PER_DAY, MINUTES_PER_YEAR, START_YEAR_CODE};
pub use interval::{intervals_for_gap, IntervalLadder, INTERVAL_CLASS_COUNT, SIX_MONTHS_MINUTES};
pub use timeline::{
    build_timeline, build_vocabulary, encode_age_and_start_year, event_token_strings, group_by_patient, tokenize_cohort,
    tokenize_event, PatientTimeline, MAX_EVENT_TOKENS,
};
pub use vocab::{Specials, TokenId, Vocabulary, VocabularyBuilder};
