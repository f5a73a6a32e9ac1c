//! Glue from raw events to split, tokenized and segmented corpora.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    compute_stats, render_stats_csv, segment_all, split_patients, PatientSplit, TokenStream, TrainingExample, DEFAULT_MIN_LEN,
    MAX_EXAMPLE_LEN,
};
use crate::error::{Error, Result};
use crate::tokenizer::{
    build_vocabulary, tokenize_cohort, BinnerRegistry, ClinicalEvent, IntervalLadder, PatientTimeline, Vocabulary,
    DEFAULT_BIN_COUNT, DEFAULT_MIN_GROUP_SIZE,
};
use crate::zero_shot::{extract_label, parse_labels_csv, render_labels_csv, Task, TaskLabel, TokenRoles};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareOptions {
    pub bin_count: usize,
    pub min_group_size: usize,
    /// Train, validation and test fractions.
    pub split: (f64, f64, f64),
    pub seed: u64,
    pub max_example_len: usize,
    pub min_example_len: usize,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            bin_count: DEFAULT_BIN_COUNT,
            min_group_size: DEFAULT_MIN_GROUP_SIZE,
            split: (0.8, 0.1, 0.1),
            seed: 0,
            max_example_len: MAX_EXAMPLE_LEN,
            min_example_len: DEFAULT_MIN_LEN,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub vocab: Vocabulary,
    pub split: PatientSplit,
    pub train: Vec<PatientTimeline>,
    pub val: Vec<PatientTimeline>,
    pub test: Vec<PatientTimeline>,
    pub train_examples: Vec<TrainingExample>,
    pub val_examples: Vec<TrainingExample>,
    /// Held-out ground truth for every task with a determinable anchor.
    pub test_labels: Vec<TaskLabel>,
}

/// Splits patients, fits value binners on the training split only, builds
/// the vocabulary over every split, tokenizes and segments.
pub fn prepare_corpus(patients: &[Vec<ClinicalEvent>], opts: &PrepareOptions) -> Result<PreparedCorpus> {
    if patients.is_empty() {
        return Err(Error::EmptyInput("patients"));
    }
    let ids: Vec<String> = patients
        .iter()
        .map(|p| p.first().map(|e| e.patient_id.clone()).ok_or(Error::EmptyInput("patient events")))
        .collect::<Result<_>>()?;
    let split = split_patients(&ids, opts.split, opts.seed)?;
    let pick = |set: &[String]| -> Vec<Vec<ClinicalEvent>> {
        let s: HashSet<&String> = set.iter().collect();
        patients.iter().zip(&ids).filter(|(_, id)| s.contains(id)).map(|(p, _)| p.clone()).collect()
    };
    let (train_p, val_p, test_p) = (pick(&split.train), pick(&split.val), pick(&split.test));
    let binners = BinnerRegistry::fit(train_p.iter().flatten(), opts.bin_count, opts.min_group_size)?;
    let vocab = build_vocabulary(patients.iter().map(Vec::as_slice), opts.bin_count)?;
    let ladder = IntervalLadder::standard();
    let train = tokenize_cohort(&train_p, &vocab, &binners, &ladder)?;
    let val = tokenize_cohort(&val_p, &vocab, &binners, &ladder)?;
    let test = tokenize_cohort(&test_p, &vocab, &binners, &ladder)?;
    let train_examples = segment_all(&train, opts.max_example_len, opts.min_example_len);
    let val_examples = segment_all(&val, opts.max_example_len, opts.min_example_len);
    let roles = TokenRoles::from_vocab(&vocab);
    let test_labels = test_labels(&test, &roles);
    Ok(PreparedCorpus { vocab, split, train, val, test, train_examples, val_examples, test_labels })
}

/// Labels for every task, patient-major.
pub fn test_labels(timelines: &[PatientTimeline], roles: &TokenRoles) -> Vec<TaskLabel> {
    timelines.iter().flat_map(|t| Task::ALL.into_iter().filter_map(move |task| extract_label(t, task, roles))).collect()
}

pub const SPLITS: [&str; 3] = ["train", "val", "test"];
pub const VOCAB_FILE: &str = "vocab.txt";
pub const LABELS_FILE: &str = "labels.csv";
pub const STATS_FILE: &str = "stats.csv";
pub const OPTIONS_FILE: &str = "corpus.json";

pub fn stream_file(split: &str) -> String {
    format!("{split}.ehrt")
}

pub fn ids_file(split: &str) -> String {
    format!("{split}_ids.txt")
}

/// Per-split stats table over timelines and their segments.
pub fn split_stats_csv(splits: [&[PatientTimeline]; 3], opts: &PrepareOptions) -> Result<String> {
    let mut stats = Vec::new();
    for (name, tl) in SPLITS.iter().zip(splits) {
        let ex = segment_all(tl, opts.max_example_len, opts.min_example_len);
        stats.push((*name, compute_stats(tl, &ex)?));
    }
    Ok(render_stats_csv(&stats.iter().map(|(n, s)| (*n, s)).collect::<Vec<_>>()))
}

impl PreparedCorpus {
    fn split_timelines(&self) -> [&[PatientTimeline]; 3] {
        [&self.train, &self.val, &self.test]
    }

    pub fn stats_csv(&self, opts: &PrepareOptions) -> Result<String> {
        split_stats_csv(self.split_timelines(), opts)
    }

    /// Writes the corpus directory; returns the relative paths written.
    pub fn write_dir(&self, dir: &Path, opts: &PrepareOptions) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
            let path = dir.join(&name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            written.push(name);
            Ok(())
        };
        put(VOCAB_FILE.into(), self.vocab.to_text().into_bytes())?;
        for (name, tl) in SPLITS.iter().zip(self.split_timelines()) {
            put(stream_file(name), TokenStream::from_timelines(tl, self.vocab.len())?.to_bytes())?;
            let ids: String = tl.iter().map(|t| format!("{}\n", t.patient_id)).collect();
            put(ids_file(name), ids.into_bytes())?;
        }
        put(LABELS_FILE.into(), render_labels_csv(&self.test_labels).into_bytes())?;
        put(STATS_FILE.into(), self.stats_csv(opts)?.into_bytes())?;
        let json = serde_json::to_string_pretty(opts).map_err(|e| Error::Format { what: "corpus options", message: e.to_string() })?;
        put(OPTIONS_FILE.into(), (json + "\n").into_bytes())?;
        Ok(written)
    }
}

/// A corpus directory read back; timelines carry tokens only (no ages).
#[derive(Debug, Clone)]
pub struct StoredCorpus {
    pub vocab: Vocabulary,
    pub options: PrepareOptions,
    pub train: Vec<PatientTimeline>,
    pub val: Vec<PatientTimeline>,
    pub test: Vec<PatientTimeline>,
    pub test_labels: Vec<TaskLabel>,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_split(dir: &Path, split: &str, vocab: &Vocabulary) -> Result<Vec<PatientTimeline>> {
    let stream = TokenStream::read(&dir.join(stream_file(split)))?;
    if stream.vocab_size as usize != vocab.len() {
        return Err(Error::Format {
            what: "token stream",
            message: format!("{split} stream has vocabulary size {} but vocab.txt has {}", stream.vocab_size, vocab.len()),
        });
    }
    let ids_text = read_text(&dir.join(ids_file(split)))?;
    let ids: Vec<&str> = ids_text.lines().filter(|l| !l.is_empty()).collect();
    if ids.len() != stream.patient_count() {
        return Err(Error::Format {
            what: "patient ids",
            message: format!("{split}: {} ids for {} patients", ids.len(), stream.patient_count()),
        });
    }
    Ok(ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let tokens = stream.patient(i).to_vec();
            PatientTimeline { patient_id: id.to_string(), token_ages: vec![None; tokens.len()], tokens, static_prefix_len: 0 }
        })
        .collect())
}

pub fn read_corpus_dir(dir: &Path) -> Result<StoredCorpus> {
    let vocab = Vocabulary::read(&dir.join(VOCAB_FILE))?;
    let options: PrepareOptions = serde_json::from_str(&read_text(&dir.join(OPTIONS_FILE))?)
        .map_err(|e| Error::Format { what: "corpus options", message: e.to_string() })?;
    let train = read_split(dir, "train", &vocab)?;
    let val = read_split(dir, "val", &vocab)?;
    let test = read_split(dir, "test", &vocab)?;
    let test_labels = parse_labels_csv(&read_text(&dir.join(LABELS_FILE))?)?;
    Ok(StoredCorpus { vocab, options, train, val, test, test_labels })
}

impl StoredCorpus {
    pub fn split_timelines(&self) -> [&[PatientTimeline]; 3] {
        [&self.train, &self.val, &self.test]
    }

    /// Segments with at most `max_len` tokens (capped by the stored option).
    pub fn examples_capped(&self, timelines: &[PatientTimeline], max_len: usize) -> Vec<TrainingExample> {
        segment_all(timelines, self.options.max_example_len.min(max_len), self.options.min_example_len)
    }

    pub fn examples(&self, timelines: &[PatientTimeline]) -> Vec<TrainingExample> {
        segment_all(timelines, self.options.max_example_len, self.options.min_example_len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_cohort, SyntheticCohortConfig};

    fn small() -> (PreparedCorpus, PrepareOptions) {
        let events = generate_synthetic_cohort(&SyntheticCohortConfig { n_patients: 120, seed: 4, ..Default::default() }).unwrap();
        let opts = PrepareOptions { min_group_size: 5, max_example_len: 128, seed: 9, ..Default::default() };
        (prepare_corpus(&events, &opts).unwrap(), opts)
    }

    #[test]
    fn splits_are_disjoint_and_complete() {
        let (p, _) = small();
        let mut ids: Vec<&str> = p.train.iter().chain(&p.val).chain(&p.test).map(|t| t.patient_id.as_str()).collect();
        assert_eq!(ids.len(), 120);
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 120);
        assert!(p.train_examples.iter().all(|e| e.len() <= 128));
        let test_ids: HashSet<&str> = p.test.iter().map(|t| t.patient_id.as_str()).collect();
        assert!(p.test_labels.iter().all(|l| test_ids.contains(l.patient_id.as_str())));
    }

    #[test]
    fn corpus_dir_round_trip() {
        let (p, opts) = small();
        let dir = tempfile::tempdir().unwrap();
        let written = p.write_dir(dir.path(), &opts).unwrap();
        assert!(written.contains(&"train.ehrt".to_string()));
        let back = read_corpus_dir(dir.path()).unwrap();
        assert_eq!(back.vocab.tokens(), p.vocab.tokens());
        assert_eq!(back.options, opts);
        for (a, b) in [(&back.train, &p.train), (&back.val, &p.val), (&back.test, &p.test)] {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!((&x.patient_id, &x.tokens), (&y.patient_id, &y.tokens));
            }
        }
        assert_eq!(back.test_labels, p.test_labels);
        assert_eq!(back.examples(&back.train), p.train_examples);
    }

    #[test]
    fn deterministic_per_seed() {
        let (a, _) = small();
        let (b, _) = small();
        assert_eq!(a.train, b.train);
        assert_eq!(a.split, b.split);
    }
}
