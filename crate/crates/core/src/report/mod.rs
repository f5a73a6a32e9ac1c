//! Report artifacts: SVG figures, run manifests and output-directory locks.

pub mod figures;
pub mod lock;
pub mod manifest;
pub mod svg;

pub use figures::{budget_label, isoflop_figure, law_figure, loss_auc_figure, roc_figure, LawQuantity, REFERENCE_AUC_RANGE};
pub use lock::{OutDirLock, LOCK_FILE};
pub use manifest::{file_digest, manifests_in, sha256_hex, Artifact, RunManifest, TOOL_VERSION};
pub use svg::{parse_fit_lines, parse_markers, Axis, FitLine, Plot, Scale, Series};
