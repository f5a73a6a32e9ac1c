//! Fixed-compute sweeps, IsoFLOP parabolas and compute-optimal power laws.

pub mod fit;
pub mod sweep;

pub use fit::{extrapolate, fit_parabola, fit_power_law, Extrapolation, ParabolaFit, PowerLawFit};
pub use sweep::{
    analyze_sweep, checkpoint_name, parse_manifest, read_manifest, render_fit_csv, render_law_csv, render_manifest,
    run_sweep, run_sweep_with, select_lowest, BudgetFit, IsoFlopPoint, PointJob, PointStatus, SweepAnalysis,
    SweepOptions, DEFAULT_RETAINED, REFERENCE_D_EXPONENT, REFERENCE_N_EXPONENT,
};
