use crate::tokenizer::{PatientTimeline, TokenId};

/// Fixed model context length.
pub const MAX_EXAMPLE_LEN: usize = 2048;
/// Shortest example kept by default.
pub const DEFAULT_MIN_LEN: usize = 32;

/// One training sequence, drawn contiguously from a single patient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub patient_id: String,
    pub tokens: Vec<TokenId>,
}

impl TrainingExample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Cut a timeline into consecutive non-overlapping chunks of at most
/// `max_len` tokens, dropping a final chunk shorter than `min_len`.
pub fn segment_timeline(timeline: &PatientTimeline, max_len: usize, min_len: usize) -> Vec<TrainingExample> {
    assert!(max_len >= min_len && min_len >= 1, "need max_len >= min_len >= 1");
    timeline
        .tokens
        .chunks(max_len)
        .filter(|c| c.len() >= min_len)
        .map(|c| TrainingExample { patient_id: timeline.patient_id.clone(), tokens: c.to_vec() })
        .collect()
}

pub fn segment_all(timelines: &[PatientTimeline], max_len: usize, min_len: usize) -> Vec<TrainingExample> {
    timelines.iter().flat_map(|t| segment_timeline(t, max_len, min_len)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn timeline(id: &str, n: usize) -> PatientTimeline {
        PatientTimeline {
            patient_id: id.into(),
            tokens: (0..n as u32).map(TokenId).collect(),
            token_ages: vec![None; n],
            static_prefix_len: 0,
        }
    }

    fn lens(ex: &[TrainingExample]) -> Vec<usize> {
        ex.iter().map(TrainingExample::len).collect()
    }

    #[test]
    fn long_timeline() {
        assert_eq!(lens(&segment_timeline(&timeline("a", 5000), 2048, 2)), [2048, 2048, 904]);
    }

    #[test]
    fn short_timeline() {
        assert_eq!(lens(&segment_timeline(&timeline("a", 100), 2048, 2)), [100]);
    }

    #[test]
    fn min_length_filter() {
        assert_eq!(lens(&segment_timeline(&timeline("a", 2049), 2048, 2)), [2048]);
        assert!(segment_timeline(&timeline("a", 10), 2048, 32).is_empty());
    }

    #[test]
    fn chunks_are_contiguous() {
        let ex = segment_timeline(&timeline("a", 5000), 2048, 1);
        assert_eq!(ex[1].tokens[0], TokenId(2048));
        assert_eq!(ex[2].tokens.last(), Some(&TokenId(4999)));
    }

    proptest! {
        #[test]
        fn never_crosses_patients(lengths in prop::collection::vec(1usize..3000, 1..30), max_len in 1usize..2049, min_len in 1usize..40) {
            let min_len = min_len.min(max_len);
            let timelines: Vec<PatientTimeline> = lengths.iter().enumerate().map(|(i, &n)| timeline(&format!("p{i}"), n)).collect();
            let ex = segment_all(&timelines, max_len, min_len);
            let total: usize = lengths.iter().sum();
            let kept: usize = ex.iter().map(TrainingExample::len).sum();
            prop_assert!(kept <= total);
            if min_len == 1 {
                prop_assert_eq!(kept, total);
            }
            for e in &ex {
                prop_assert!(e.len() <= max_len && e.len() >= min_len);
                let src = timelines.iter().find(|t| t.patient_id == e.patient_id).unwrap();
                // contiguous slice of the source timeline
                let start = e.tokens[0].0 as usize;
                prop_assert_eq!(&src.tokens[start..start + e.len()], &e.tokens[..]);
            }
        }
    }
}
