use std::fmt::Write as _;

use crate::corpus::segment::TrainingExample;
use crate::error::{Error, Result};
use crate::tokenizer::PatientTimeline;

/// Distribution summary of a length column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthSummary {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); zero for one value.
    pub std: f64,
    pub min: usize,
    pub max: usize,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

/// Quantile by linear interpolation between closest ranks of sorted data.
pub fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl LengthSummary {
    pub fn of(lengths: &[usize]) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::EmptyInput("length summary"));
        }
        let n = lengths.len() as f64;
        let mean = lengths.iter().sum::<usize>() as f64 / n;
        let std = if lengths.len() > 1 {
            (lengths.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
        sorted.sort_by(f64::total_cmp);
        Ok(LengthSummary {
            mean,
            std,
            min: *lengths.iter().min().unwrap_or(&0),
            max: *lengths.iter().max().unwrap_or(&0),
            q1: interpolated_quantile(&sorted, 0.25),
            q2: interpolated_quantile(&sorted, 0.5),
            q3: interpolated_quantile(&sorted, 0.75),
        })
    }
}

/// Corpus statistics in the layout of a per-split timeline table.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub patient_count: usize,
    pub timeline_lengths: LengthSummary,
    pub example_lengths: LengthSummary,
    pub total_timeline_tokens: usize,
    pub total_examples: usize,
    pub total_trainable_tokens: usize,
}

pub fn compute_stats(timelines: &[PatientTimeline], examples: &[TrainingExample]) -> Result<CorpusStats> {
    let tl: Vec<usize> = timelines.iter().map(PatientTimeline::len).collect();
    let ex: Vec<usize> = examples.iter().map(TrainingExample::len).collect();
    compute_stats_from_lengths(&tl, &ex)
}

pub fn compute_stats_from_lengths(timeline_lengths: &[usize], example_lengths: &[usize]) -> Result<CorpusStats> {
    if timeline_lengths.is_empty() {
        return Err(Error::EmptyInput("timelines"));
    }
    if example_lengths.is_empty() {
        return Err(Error::EmptyInput("training examples"));
    }
    Ok(CorpusStats {
        patient_count: timeline_lengths.len(),
        timeline_lengths: LengthSummary::of(timeline_lengths)?,
        example_lengths: LengthSummary::of(example_lengths)?,
        total_timeline_tokens: timeline_lengths.iter().sum(),
        total_examples: example_lengths.len(),
        total_trainable_tokens: example_lengths.iter().sum(),
    })
}

/// Row labels of the stats CSV, in order.
pub const STATS_ROWS: [&str; 18] = [
    "patients",
    "timeline_length_mean",
    "timeline_length_std",
    "timeline_length_min",
    "timeline_length_max",
    "timeline_length_q1",
    "timeline_length_q2",
    "timeline_length_q3",
    "total_timeline_tokens",
    "example_length_mean",
    "example_length_std",
    "example_length_min",
    "example_length_max",
    "example_length_q1",
    "example_length_q2",
    "example_length_q3",
    "total_training_examples",
    "total_trainable_tokens",
];

fn row_values(s: &CorpusStats) -> Vec<String> {
    let f = |x: f64| format!("{x:.2}");
    let summary = |l: &LengthSummary| {
        vec![f(l.mean), f(l.std), l.min.to_string(), l.max.to_string(), f(l.q1), f(l.q2), f(l.q3)]
    };
    let mut v = vec![s.patient_count.to_string()];
    v.extend(summary(&s.timeline_lengths));
    v.push(s.total_timeline_tokens.to_string());
    v.extend(summary(&s.example_lengths));
    v.push(s.total_examples.to_string());
    v.push(s.total_trainable_tokens.to_string());
    v
}

/// CSV with one row per statistic and one column per split.
pub fn render_stats_csv(splits: &[(&str, &CorpusStats)]) -> String {
    let mut out = String::from("statistic");
    for (name, _) in splits {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let columns: Vec<Vec<String>> = splits.iter().map(|(_, s)| row_values(s)).collect();
    for (i, row) in STATS_ROWS.iter().enumerate() {
        out.push_str(row);
        for col in &columns {
            let _ = write!(out, ",{}", col[i]);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_arithmetic() {
        let s = LengthSummary::of(&[2, 4]).unwrap();
        assert_eq!((s.mean, s.min, s.max), (3.0, 2, 4));
        assert!((s.std - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.q2, 3.0);
    }

    #[test]
    fn odd_count_median_and_quartiles() {
        let s = LengthSummary::of(&[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(s.q2, 3.0);
        assert_eq!((s.q1, s.q3), (2.0, 4.0));
        let s = LengthSummary::of(&[1, 2, 3, 4]).unwrap();
        assert_eq!((s.q1, s.q2, s.q3), (1.75, 2.5, 3.25));
    }

    #[test]
    fn totals_and_ordering() {
        let s = compute_stats_from_lengths(&[10, 3, 7000], &[10, 2048, 2048, 2048, 856]).unwrap();
        assert_eq!(s.total_timeline_tokens, 7013);
        assert_eq!(s.total_trainable_tokens, 10 + 3 * 2048 + 856);
        assert_eq!(s.total_examples, 5);
        for l in [s.timeline_lengths, s.example_lengths] {
            assert!(l.min as f64 <= l.q1 && l.q1 <= l.q2 && l.q2 <= l.q3 && l.q3 <= l.max as f64);
        }
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(compute_stats_from_lengths(&[], &[1]).is_err());
        assert!(compute_stats_from_lengths(&[1], &[]).is_err());
    }

    #[test]
    fn csv_layout() {
        let s = compute_stats_from_lengths(&[2, 4], &[2, 4]).unwrap();
        let csv = render_stats_csv(&[("train", &s), ("test", &s)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "statistic,train,test");
        assert_eq!(lines.len(), STATS_ROWS.len() + 1);
        assert_eq!(lines[1], "patients,2,2");
        assert!(csv.contains("\ntotal_timeline_tokens,6,6\n"));
    }
}
