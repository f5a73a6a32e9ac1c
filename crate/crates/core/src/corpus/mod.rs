//! Cohorts, splits, boundary-preserving segmentation, batching and
//! token-stream persistence.

pub mod batch;
pub mod segment;
pub mod split;
pub mod stats;
pub mod stream;
pub mod synth;

pub use batch::Batcher;
pub use segment::{segment_all, segment_timeline, TrainingExample, DEFAULT_MIN_LEN, MAX_EXAMPLE_LEN};
pub use split::{split_patients, PatientSplit};
pub use stats::{compute_stats, compute_stats_from_lengths, render_stats_csv, CorpusStats, LengthSummary};
pub use stream::TokenStream;
pub use synth::{generate_synthetic_cohort, SyntheticCohortConfig};
