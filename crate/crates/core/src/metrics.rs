//! Discrimination metrics for scored cohorts.

use rand::Rng as _;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::derived;

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;
const MAX_REDRAWS: usize = 10;

/// Scores in `[0, 1]` paired with binary labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredCohort {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoredCohort {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite score {s}")));
        }
        Ok(ScoredCohort { scores, labels })
    }

    pub fn from_pairs(pairs: &[(f64, bool)]) -> Result<Self> {
        Self::new(pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    fn class_scores(&self, label: bool) -> Vec<f64> {
        self.scores.iter().zip(&self.labels).filter(|(_, &l)| l == label).map(|(&s, _)| s).collect()
    }

    fn require_both(&self) -> Result<()> {
        if self.positives() == 0 || self.negatives() == 0 {
            return Err(Error::SingleClass("both classes are required"));
        }
        Ok(())
    }
}

/// Mann-Whitney estimate of `P(score+ > score-) + P(tie)/2`, via midranks.
pub fn empirical_auc(cohort: &ScoredCohort) -> Result<f64> {
    cohort.require_both()?;
    let mut idx: Vec<usize> = (0..cohort.len()).collect();
    idx.sort_by(|&a, &b| cohort.scores[a].total_cmp(&cohort.scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && cohort.scores[idx[j + 1]] == cohort.scores[idx[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * idx[i..=j].iter().filter(|&&k| cohort.labels[k]).count() as f64;
        i = j + 1;
    }
    let (n1, n0) = (cohort.positives() as f64, cohort.negatives() as f64);
    Ok((rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

/// Unequal-variance binormal ROC fitted on probit scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinormalRoc {
    pub mu0: f64,
    pub sigma0: f64,
    pub mu1: f64,
    pub sigma1: f64,
    pub auc: f64,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn phi(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn probit(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// `Phi((mu1 - mu0) / sqrt(sigma0^2 + sigma1^2))`
pub fn binormal_auc(mu0: f64, sigma0: f64, mu1: f64, sigma1: f64) -> f64 {
    phi((mu1 - mu0) / (sigma0 * sigma0 + sigma1 * sigma1).sqrt())
}

/// Clamp used before the probit transform of `k / n_rollouts` scores.
pub fn probit_epsilon(n_rollouts: usize) -> f64 {
    1.0 / (2.0 * n_rollouts as f64 + 2.0)
}

impl BinormalRoc {
    pub fn new(mu0: f64, sigma0: f64, mu1: f64, sigma1: f64) -> Result<Self> {
        if !(sigma0 > 0.0 && sigma1 > 0.0) {
            return Err(Error::DegenerateFit(format!("class standard deviations {sigma0} and {sigma1}")));
        }
        Ok(BinormalRoc { mu0, sigma0, mu1, sigma1, auc: binormal_auc(mu0, sigma0, mu1, sigma1) })
    }

    /// `(fpr, tpr)` of the fitted curve at threshold `t` on the probit scale.
    pub fn point(&self, t: f64) -> (f64, f64) {
        (1.0 - phi((t - self.mu0) / self.sigma0), 1.0 - phi((t - self.mu1) / self.sigma1))
    }

    /// `n` points from (1, 1) down to (0, 0) spanning six standard deviations.
    pub fn curve(&self, n: usize) -> Vec<(f64, f64)> {
        let lo = (self.mu0 - 6.0 * self.sigma0).min(self.mu1 - 6.0 * self.sigma1);
        let hi = (self.mu0 + 6.0 * self.sigma0).max(self.mu1 + 6.0 * self.sigma1);
        (0..n).map(|i| self.point(lo + (hi - lo) * i as f64 / (n.max(2) - 1) as f64)).collect()
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Moment fit on `probit(clamp(score, eps, 1 - eps))` per class.
pub fn fit_binormal(cohort: &ScoredCohort, n_rollouts: usize) -> Result<BinormalRoc> {
    let eps = probit_epsilon(n_rollouts);
    let transform = |s: Vec<f64>| -> Vec<f64> { s.into_iter().map(|x| probit(x.clamp(eps, 1.0 - eps))).collect() };
    let neg = transform(cohort.class_scores(false));
    let pos = transform(cohort.class_scores(true));
    if neg.len() < 2 || pos.len() < 2 {
        return Err(Error::DegenerateFit(format!("{} negatives and {} positives; need two of each", neg.len(), pos.len())));
    }
    let (mu0, s0) = mean_sd(&neg);
    let (mu1, s1) = mean_sd(&pos);
    BinormalRoc::new(mu0, s0, mu1, s1)
}

/// Average precision; tied scores form one group sharing its precision.
pub fn pr_auc(cohort: &ScoredCohort) -> Result<f64> {
    let p = cohort.positives();
    if p == 0 {
        return Err(Error::SingleClass("average precision needs a positive"));
    }
    let mut idx: Vec<usize> = (0..cohort.len()).collect();
    idx.sort_by(|&a, &b| cohort.scores[b].total_cmp(&cohort.scores[a]));
    let (mut seen, mut tp, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && cohort.scores[idx[j + 1]] == cohort.scores[idx[i]] {
            j += 1;
        }
        let group_pos = idx[i..=j].iter().filter(|&&k| cohort.labels[k]).count();
        seen += j - i + 1;
        tp += group_pos;
        ap += group_pos as f64 * tp as f64 / seen as f64;
        i = j + 1;
    }
    Ok(ap / p as f64)
}

/// Empirical ROC polyline from (0, 0) to (1, 1), tied scores stepping together.
pub fn roc_points(cohort: &ScoredCohort) -> Result<Vec<(f64, f64)>> {
    cohort.require_both()?;
    let (np, nn) = (cohort.positives() as f64, cohort.negatives() as f64);
    let mut idx: Vec<usize> = (0..cohort.len()).collect();
    idx.sort_by(|&a, &b| cohort.scores[b].total_cmp(&cohort.scores[a]));
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && cohort.scores[idx[j + 1]] == cohort.scores[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            if cohort.labels[k] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        pts.push((fp as f64 / nn, tp as f64 / np));
        i = j + 1;
    }
    Ok(pts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Standard deviation of the resampled statistics.
    pub std_error: f64,
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap over patients. Resamples lacking a class are redrawn
/// up to ten times; each resample has its own seed, so the result does not
/// depend on scheduling.
pub fn bootstrap_ci<F>(cohort: &ScoredCohort, metric: F, n_resamples: usize, level: f64, seed: u64) -> Result<BootstrapInterval>
where
    F: Fn(&ScoredCohort) -> Result<f64> + Sync,
{
    if cohort.is_empty() {
        return Err(Error::EmptyInput("cohort"));
    }
    if n_resamples < 2 || !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("bootstrap needs at least two resamples and a level in (0, 1)"));
    }
    cohort.require_both()?;
    let estimate = metric(cohort)?;
    let n = cohort.len();
    let mut values: Vec<f64> = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = derived(seed, "bootstrap", r as u64);
            for _ in 0..=MAX_REDRAWS {
                let picks: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let sample = ScoredCohort {
                    scores: picks.iter().map(|&i| cohort.scores[i]).collect(),
                    labels: picks.iter().map(|&i| cohort.labels[i]).collect(),
                };
                if sample.positives() > 0 && sample.negatives() > 0 {
                    return metric(&sample);
                }
            }
            Err(Error::SingleClass("bootstrap resamples keep missing a class"))
        })
        .collect::<Result<_>>()?;
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt();
    Ok(BootstrapInterval { estimate, lower: quantile(&values, alpha), upper: quantile(&values, 1.0 - alpha), std_error: sd })
}

/// Least squares of a metric on `ln(loss)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossMetricFit {
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation of `ln(loss)` and metric; 0 when the metric is constant.
    pub correlation: f64,
}

pub fn loss_vs_metric_regression(points: &[(f64, f64)]) -> Result<LossMetricFit> {
    if points.len() < 2 {
        return Err(Error::invalid("regression needs at least two points"));
    }
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0)) {
        return Err(Error::invalid(format!("loss must be positive, got {}", p.0)));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all losses are equal".into()));
    }
    let slope = sxy / sxx;
    let correlation = if syy == 0.0 { 0.0 } else { sxy / (sxx * syy).sqrt() };
    Ok(LossMetricFit { slope, intercept: my - slope * mx, correlation })
}

/// One row of the metrics report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub model_id: String,
    pub params: u64,
    pub val_loss: f64,
    pub task: String,
    pub roc_auc: BootstrapInterval,
    pub pr_auc: BootstrapInterval,
}

pub const METRICS_HEADER: &str =
    "model_id,params,val_loss,task,roc_auc,roc_auc_ci_lo,roc_auc_ci_hi,pr_auc,pr_auc_ci_lo,pr_auc_ci_hi";

pub fn render_metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.model_id,
            r.params,
            r.val_loss,
            r.task,
            r.roc_auc.estimate,
            r.roc_auc.lower,
            r.roc_auc.upper,
            r.pr_auc.estimate,
            r.pr_auc.lower,
            r.pr_auc.upper
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal as Gauss};

    fn cohort(pos: &[f64], neg: &[f64]) -> ScoredCohort {
        let mut pairs: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).collect();
        pairs.extend(neg.iter().map(|&s| (s, false)));
        ScoredCohort::from_pairs(&pairs).unwrap()
    }

    fn brute_auc(c: &ScoredCohort) -> f64 {
        let (p, n) = (c.class_scores(true), c.class_scores(false));
        let mut s = 0.0;
        for a in &p {
            for b in &n {
                s += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
        s / (p.len() * n.len()) as f64
    }

    #[test]
    fn auc_examples() {
        assert_eq!(empirical_auc(&cohort(&[0.9, 0.8], &[0.1, 0.2])).unwrap(), 1.0);
        assert_eq!(empirical_auc(&cohort(&[0.3, 0.3], &[0.3])).unwrap(), 0.5);
        assert_eq!(empirical_auc(&cohort(&[0.9, 0.4], &[0.5, 0.1])).unwrap(), 0.75);
        assert!(empirical_auc(&cohort(&[0.9], &[])).is_err());
    }

    proptest! {
        #[test]
        fn auc_matches_pairs(v in proptest::collection::vec((0u8..5, any::<bool>()), 2..=8)) {
            let c = ScoredCohort::from_pairs(&v.iter().map(|&(s, l)| (s as f64 / 4.0, l)).collect::<Vec<_>>()).unwrap();
            prop_assume!(c.positives() > 0 && c.negatives() > 0);
            prop_assert!((empirical_auc(&c).unwrap() - brute_auc(&c)).abs() < 1e-12);
        }

        #[test]
        fn auc_invariant_to_monotone_transform(v in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 2..40)) {
            let c = ScoredCohort::from_pairs(&v).unwrap();
            prop_assume!(c.positives() > 0 && c.negatives() > 0);
            let t = ScoredCohort::new(c.scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect(), c.labels.clone()).unwrap();
            prop_assert!((empirical_auc(&c).unwrap() - empirical_auc(&t).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn binormal_swap_symmetry(v in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 4..40)) {
            let c = ScoredCohort::from_pairs(&v).unwrap();
            prop_assume!(c.positives() >= 2 && c.negatives() >= 2);
            let swapped = ScoredCohort::new(c.scores.clone(), c.labels.iter().map(|l| !l).collect()).unwrap();
            if let (Ok(a), Ok(b)) = (fit_binormal(&c, 20), fit_binormal(&swapped, 20)) {
                prop_assert!((a.auc + b.auc - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn binormal_closed_forms() {
        assert!((binormal_auc(0.3, 1.0, 0.3, 2.0) - 0.5).abs() < 1e-12);
        let s = 0.7;
        let auc = binormal_auc(0.0, s, 2f64.sqrt() * s, s);
        assert!((auc - 0.841_344_746).abs() < 1e-6);
        assert!((phi(0.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn binormal_agrees_with_empirical_on_gaussians() {
        let mut rng = seeded(5);
        let (g0, g1) = (Gauss::new(0.0, 1.0).unwrap(), Gauss::new(1.2, 1.5).unwrap());
        let mut pairs = Vec::new();
        for _ in 0..10_000 {
            pairs.push((phi(g0.sample(&mut rng)), false));
            pairs.push((phi(g1.sample(&mut rng)), true));
        }
        let c = ScoredCohort::from_pairs(&pairs).unwrap();
        let fit = fit_binormal(&c, 1_000_000).unwrap();
        assert!((fit.auc - empirical_auc(&c).unwrap()).abs() < 0.01);
    }

    #[test]
    fn binormal_needs_variance() {
        let c = cohort(&[0.5, 0.5], &[0.1, 0.3]);
        assert!(fit_binormal(&c, 20).is_err());
        assert!(fit_binormal(&cohort(&[0.5], &[0.1, 0.3]), 20).is_err());
    }

    #[test]
    fn average_precision_examples() {
        assert_eq!(pr_auc(&cohort(&[0.2, 0.4], &[])).unwrap(), 1.0);
        assert_eq!(pr_auc(&cohort(&[0.9, 0.8], &[0.1, 0.5])).unwrap(), 1.0);
        assert!((pr_auc(&cohort(&[0.9, 0.3], &[0.5])).unwrap() - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        // one tied group of one positive and one negative
        assert_eq!(pr_auc(&cohort(&[0.5], &[0.5])).unwrap(), 0.5);
        assert!(pr_auc(&cohort(&[], &[0.5])).is_err());
    }

    #[test]
    fn roc_polyline_area_is_auc() {
        let c = cohort(&[0.9, 0.4, 0.4, 0.7], &[0.5, 0.1, 0.4]);
        let pts = roc_points(&c).unwrap();
        let area: f64 = pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum();
        assert!((area - empirical_auc(&c).unwrap()).abs() < 1e-12);
        assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
    }

    #[test]
    fn bootstrap_identical_scores() {
        let c = cohort(&[0.5; 10], &[0.5; 10]);
        let ci = bootstrap_ci(&c, empirical_auc, 200, 0.95, 1).unwrap();
        assert_eq!((ci.lower, ci.upper), (0.5, 0.5));
    }

    #[test]
    fn bootstrap_deterministic() {
        let c = cohort(&[0.9, 0.4, 0.6, 0.55], &[0.5, 0.1, 0.45, 0.2, 0.7]);
        let a = bootstrap_ci(&c, empirical_auc, 300, 0.95, 9).unwrap();
        let b = bootstrap_ci(&c, empirical_auc, 300, 0.95, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.lower <= a.estimate && a.estimate <= a.upper);
    }

    #[test]
    fn bootstrap_rejects_hopeless_cohorts() {
        assert!(bootstrap_ci(&cohort(&[0.9], &[]), empirical_auc, 50, 0.95, 0).is_err());
    }

    /// Binormal cohort with AUC 0.80: mu1 - mu0 = sqrt(2) * probit(0.8).
    fn known_auc_cohort(n: usize, rng: &mut crate::rng::Rng) -> ScoredCohort {
        let shift = 2f64.sqrt() * probit(0.8);
        let (g0, g1) = (Gauss::new(0.0, 1.0).unwrap(), Gauss::new(shift, 1.0).unwrap());
        let pairs: Vec<(f64, bool)> = (0..n)
            .map(|i| if i % 2 == 0 { (g0.sample(rng), false) } else { (g1.sample(rng), true) })
            .collect();
        ScoredCohort::from_pairs(&pairs).unwrap()
    }

    #[test]
    fn bootstrap_coverage() {
        let mut rng = seeded(77);
        let mut hits = 0;
        for rep in 0..100 {
            let c = known_auc_cohort(500, &mut rng);
            let ci = bootstrap_ci(&c, empirical_auc, 400, 0.95, rep).unwrap();
            if ci.lower <= 0.8 && 0.8 <= ci.upper {
                hits += 1;
            }
        }
        assert!(hits >= 90, "coverage {hits}/100");
    }

    #[test]
    fn bootstrap_width_shrinks_with_n() {
        let mut rng = seeded(3);
        let width = |n: usize, rng: &mut crate::rng::Rng| -> f64 {
            (0..10)
                .map(|k| {
                    let ci = bootstrap_ci(&known_auc_cohort(n, rng), empirical_auc, 200, 0.95, k).unwrap();
                    ci.upper - ci.lower
                })
                .sum::<f64>()
        };
        let (a, b, c) = (width(100, &mut rng), width(400, &mut rng), width(1600, &mut rng));
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn regression_examples() {
        let two = loss_vs_metric_regression(&[(1.0, 0.6), (0.8, 0.7)]).unwrap();
        assert!((two.correlation.abs() - 1.0).abs() < 1e-12);
        let mut rng = seeded(2);
        let noise = Gauss::new(0.0, 1e-4).unwrap();
        let pts: Vec<(f64, f64)> = (0..10)
            .map(|i| {
                let l = 0.7 + 0.05 * i as f64;
                (l, -2.0 * l.ln() + 1.0 + noise.sample(&mut rng))
            })
            .collect();
        let fit = loss_vs_metric_regression(&pts).unwrap();
        assert!((fit.slope + 2.0).abs() < 0.01);
        assert!((fit.intercept - 1.0).abs() < 0.01);
        assert!(fit.correlation < -0.99);
        assert!(loss_vs_metric_regression(&[(1.0, 0.5)]).is_err());
        assert!(loss_vs_metric_regression(&[(1.0, 0.5), (0.0, 0.6)]).is_err());
    }

    #[test]
    fn metrics_csv_columns() {
        let ci = BootstrapInterval { estimate: 0.7, lower: 0.6, upper: 0.8, std_error: 0.05 };
        let csv = render_metrics_csv(&[MetricsRow {
            model_id: "m".into(),
            params: 10,
            val_loss: 1.0,
            task: "icu_mortality".into(),
            roc_auc: ci,
            pr_auc: ci,
        }]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), METRICS_HEADER);
        assert_eq!(lines.next().unwrap().split(',').count(), 10);
    }
}
