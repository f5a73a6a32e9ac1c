//! The standard figures: IsoFLOP curves, compute-optimal laws, ROC curves
//! and validation loss against AUC.

use crate::error::Result;
use crate::isoflop::{IsoFlopPoint, PointStatus, PowerLawFit, SweepAnalysis, REFERENCE_D_EXPONENT, REFERENCE_N_EXPONENT};
use crate::metrics::{roc_points, BinormalRoc, LossMetricFit, ScoredCohort};
use crate::report::svg::{Axis, FitLine, Plot, Series};

/// Reference AUC range annotated on the loss-vs-AUC figure.
pub const REFERENCE_AUC_RANGE: (f64, f64) = (0.68, 0.75);
const CURVE_SAMPLES: usize = 48;

pub fn budget_label(budget: u128) -> String {
    format!("C={:.2e}", budget as f64)
}

/// Validation loss against parameter count, one curve per budget, with the
/// fitted parabola and its minimum.
pub fn isoflop_figure(points: &[IsoFlopPoint], analysis: &SweepAnalysis) -> Result<String> {
    let mut plot = Plot::new("IsoFLOP profiles", Axis::log("parameters N"), Axis::linear("validation loss (nats)"));
    for b in &analysis.budgets {
        let mut pts: Vec<&IsoFlopPoint> = points.iter().filter(|p| p.budget == b.budget).collect();
        pts.sort_by_key(|p| p.params);
        let ok: Vec<(f64, f64)> =
            pts.iter().filter(|p| p.status == PointStatus::Ok).map(|p| (p.params as f64, p.val_loss)).collect();
        plot.series.push(Series::markers(budget_label(b.budget), ok).with_line());
        let limited: Vec<(f64, f64)> =
            pts.iter().filter(|p| p.status == PointStatus::DataLimited).map(|p| (p.params as f64, p.val_loss)).collect();
        if !limited.is_empty() {
            plot.series.push(
                Series::markers(format!("{} data-limited", budget_label(b.budget)), limited).with_class("data-limited"),
            );
        }
        if let Ok(fit) = &b.fit {
            let lo = b.retained.iter().map(|p| p.params as f64).fold(f64::INFINITY, f64::min).ln();
            let hi = b.retained.iter().map(|p| p.params as f64).fold(f64::NEG_INFINITY, f64::max).ln();
            let curve = (0..CURVE_SAMPLES)
                .map(|i| {
                    let n = (lo + (hi - lo) * i as f64 / (CURVE_SAMPLES - 1) as f64).exp();
                    (n, fit.eval(n))
                })
                .collect();
            plot.series.push(Series::line(format!("{} fit", budget_label(b.budget)), curve).with_class("parabola"));
            plot.series.push(
                Series::markers(format!("{} optimum", budget_label(b.budget)), vec![(fit.n_opt, fit.l_min)])
                    .with_class("optimum"),
            );
        }
    }
    plot.render()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawQuantity {
    Params,
    Tokens,
}

/// Per-budget optima against compute on log-log axes with the fitted law.
pub fn law_figure(analysis: &SweepAnalysis, quantity: LawQuantity) -> Result<String> {
    let (title, ylabel, law, reference) = match quantity {
        LawQuantity::Params => ("Compute-optimal model size", "N_opt", &analysis.n_opt_law, REFERENCE_N_EXPONENT),
        LawQuantity::Tokens => ("Compute-optimal token count", "D_opt", &analysis.d_opt_law, REFERENCE_D_EXPONENT),
    };
    let mut plot = Plot::new(title, Axis::log("training FLOPs C"), Axis::log(ylabel));
    let pts: Vec<(f64, f64)> = analysis
        .budgets
        .iter()
        .filter_map(|b| {
            let v = match quantity {
                LawQuantity::Params => b.fit.as_ref().ok().map(|f| f.n_opt),
                LawQuantity::Tokens => b.d_opt,
            }?;
            Some((b.budget as f64, v))
        })
        .collect();
    plot.series.push(Series::markers(format!("{ylabel} per budget"), pts));
    if let Some(l) = law {
        plot.fits.push(law_line(ylabel, l));
        plot.notes.push(format!("fitted exponent {:.3}", l.exponent));
    }
    plot.notes.push(format!("reference exponent {reference}"));
    plot.render()
}

fn law_line(name: &str, law: &PowerLawFit) -> FitLine {
    FitLine {
        name: format!("{name} ~ C^{:.3}", law.exponent),
        slope: law.exponent,
        intercept: law.log_coefficient,
        x_start: law.c_min,
        x_end: law.c_max,
    }
}

/// Empirical ROC staircase, optional binormal curve and the chance diagonal.
pub fn roc_figure(model_id: &str, cohort: &ScoredCohort, binormal: Option<&BinormalRoc>, auc: f64) -> Result<String> {
    let mut plot = Plot::new(
        format!("ROC, {model_id}"),
        Axis::linear("false positive rate"),
        Axis::linear("true positive rate"),
    );
    plot.series.push(Series::line("empirical", roc_points(cohort)?).with_class("empirical"));
    plot.notes.push(format!("empirical AUC {auc:.3}"));
    if let Some(b) = binormal {
        plot.series.push(Series::line("binormal", b.curve(CURVE_SAMPLES)).with_class("binormal"));
        plot.notes.push(format!("binormal AUC {:.3}", b.auc));
    }
    plot.fits.push(FitLine { name: "chance".into(), slope: 1.0, intercept: 0.0, x_start: 0.0, x_end: 1.0 });
    plot.render()
}

/// AUC against validation loss (log axis) with the least-squares line.
pub fn loss_auc_figure(task: &str, points: &[(String, f64, f64)], fit: &LossMetricFit) -> Result<String> {
    let mut plot = Plot::new(
        format!("Validation loss vs AUC, {task}"),
        Axis::log("validation loss (nats)"),
        Axis::linear("empirical AUC"),
    );
    for (id, loss, auc) in points {
        plot.series.push(Series::markers(id.clone(), vec![(*loss, *auc)]));
    }
    let lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi.is_finite() {
        plot.fits.push(FitLine { name: "least squares".into(), slope: fit.slope, intercept: fit.intercept, x_start: lo, x_end: hi });
    }
    plot.notes.push(format!("Pearson r {:.3}", fit.correlation));
    plot.notes.push(format!("reference AUC {} to {}", REFERENCE_AUC_RANGE.0, REFERENCE_AUC_RANGE.1));
    plot.render()
}
