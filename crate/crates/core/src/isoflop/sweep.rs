use std::collections::HashMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::corpus::TrainingExample;
use crate::error::{Error, Result};
use crate::flops::{forward_flops_per_token, tokens_for_budget, training_flops};
use crate::isoflop::fit::{extrapolate, fit_parabola, fit_power_law, ParabolaFit, PowerLawFit};
use crate::model::{count_params, train, Checkpoint, ModelConfig, StopRule, TrainConfig};
use crate::rng::derive_seed;

pub const DEFAULT_RETAINED: usize = 6;
pub const MANIFEST_HEADER: &str = "budget,config_id,params,tokens,val_loss,status";
/// Reference exponents annotated next to fitted values.
pub const REFERENCE_N_EXPONENT: f64 = 0.58;
pub const REFERENCE_D_EXPONENT: f64 = 0.44;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatus {
    Ok,
    /// The requested tokens exceed one pass over the training split.
    DataLimited,
}

impl fmt::Display for PointStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PointStatus::Ok => "ok",
            PointStatus::DataLimited => "data_limited",
        })
    }
}

impl std::str::FromStr for PointStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(PointStatus::Ok),
            "data_limited" => Ok(PointStatus::DataLimited),
            other => Err(Error::invalid(format!("unknown point status {other:?}"))),
        }
    }
}

/// One trained model at one compute budget.
#[derive(Debug, Clone, PartialEq)]
pub struct IsoFlopPoint {
    pub budget: u128,
    pub config_id: String,
    pub params: u64,
    pub tokens: u128,
    pub val_loss: f64,
    pub status: PointStatus,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Context length used for FLOPs accounting; defaults to each config's context.
    pub seq_len: Option<usize>,
    /// Completed points are appended here and skipped on rerun.
    pub manifest: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
}

pub fn checkpoint_name(budget: u128, config_id: &str) -> String {
    format!("c{budget:e}_{config_id}.ckpt").replace('+', "")
}

fn manifest_line(p: &IsoFlopPoint) -> String {
    format!("{},{},{},{},{},{}\n", p.budget, p.config_id, p.params, p.tokens, p.val_loss, p.status)
}

pub fn render_manifest(points: &[IsoFlopPoint]) -> String {
    let mut out = format!("{MANIFEST_HEADER}\n");
    points.iter().for_each(|p| out.push_str(&manifest_line(p)));
    out
}

pub fn parse_manifest(text: &str) -> Result<Vec<IsoFlopPoint>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != MANIFEST_HEADER {
                return Err(Error::Parse { line: 1, message: format!("expected header {MANIFEST_HEADER:?}") });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: &str| Error::Parse { line: i + 1, message: m.to_string() };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err("expected 6 fields"));
        }
        out.push(IsoFlopPoint {
            budget: f[0].parse().map_err(|_| err("bad budget"))?,
            config_id: f[1].to_string(),
            params: f[2].parse().map_err(|_| err("bad params"))?,
            tokens: f[3].parse().map_err(|_| err("bad tokens"))?,
            val_loss: f[4].parse().map_err(|_| err("bad val_loss"))?,
            status: f[5].parse().map_err(|_| err("bad status"))?,
        });
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<IsoFlopPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

/// What the sweep asks a trainer to do for one point.
#[derive(Debug, Clone)]
pub struct PointJob<'a> {
    pub config: &'a ModelConfig,
    pub budget: u128,
    pub tokens: u128,
    pub seed: u64,
}

/// Runs every (budget, config) pair not already in the manifest, calling
/// `trainer` for the validation loss. Points are visited in budget-major
/// order; each gets a seed derived from its identity, so the persisted set
/// does not depend on which points were already done.
pub fn run_sweep_with<F>(
    budgets: &[u128],
    grid: &[ModelConfig],
    available_tokens: u64,
    base_seed: u64,
    opts: &SweepOptions,
    mut trainer: F,
) -> Result<Vec<IsoFlopPoint>>
where
    F: FnMut(&PointJob<'_>) -> Result<f64>,
{
    if budgets.len() < 3 || grid.len() < 4 {
        return Err(Error::invalid(format!(
            "a sweep needs at least 3 budgets and 4 models, got {} and {}",
            budgets.len(),
            grid.len()
        )));
    }
    let mut done: HashMap<(u128, String), IsoFlopPoint> = HashMap::new();
    if let Some(path) = &opts.manifest {
        if path.exists() {
            for p in read_manifest(path)? {
                done.insert((p.budget, p.config_id.clone()), p);
            }
        } else {
            std::fs::write(path, format!("{MANIFEST_HEADER}\n")).map_err(|e| Error::io(path, e))?;
        }
    }
    let mut out = Vec::with_capacity(budgets.len() * grid.len());
    for &budget in budgets {
        for config in grid {
            let id = config.id();
            if let Some(p) = done.get(&(budget, id.clone())) {
                out.push(p.clone());
                continue;
            }
            let seq = opts.seq_len.unwrap_or(config.context_len);
            let tokens = tokens_for_budget(config, budget, seq)?;
            debug_assert!(training_flops(config, tokens, seq) <= budget);
            let seed = derive_seed(base_seed, &format!("sweep/{budget}/{id}"), 0);
            let val_loss = trainer(&PointJob { config, budget, tokens, seed })?;
            let status = if tokens > available_tokens as u128 { PointStatus::DataLimited } else { PointStatus::Ok };
            let point = IsoFlopPoint { budget, config_id: id, params: count_params(config), tokens, val_loss, status };
            if let Some(path) = &opts.manifest {
                let mut f = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
                f.write_all(manifest_line(&point).as_bytes()).map_err(|e| Error::io(path, e))?;
            }
            out.push(point);
        }
    }
    Ok(out)
}

/// Sweep that trains real models in token-budget mode.
pub fn run_sweep(
    budgets: &[u128],
    grid: &[ModelConfig],
    train_set: &[TrainingExample],
    val_set: &[TrainingExample],
    train_cfg: &TrainConfig,
    opts: &SweepOptions,
) -> Result<Vec<IsoFlopPoint>> {
    let available: u64 = train_set.iter().map(|e| e.len().saturating_sub(1) as u64).sum();
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    run_sweep_with(budgets, grid, available, train_cfg.seed, opts, |job| {
        let mut cfg = train_cfg.clone();
        cfg.seed = job.seed;
        cfg.stop = StopRule::TokenBudget(job.tokens.min(u64::MAX as u128) as u64);
        let outcome = train(job.config, train_set, val_set, &cfg)?;
        if let Some(dir) = &opts.checkpoint_dir {
            let path = dir.join(checkpoint_name(job.budget, &job.config.id()));
            Checkpoint::new(outcome.params)
                .with_meta("val_loss", outcome.val_loss)
                .with_meta("budget", job.budget)
                .with_meta("tokens", outcome.tokens_processed)
                .write(&path)?;
        }
        Ok(outcome.val_loss)
    })
}

/// Up to `k` lowest-loss points, ties broken by smaller parameter count.
pub fn select_lowest(points: &[IsoFlopPoint], k: usize) -> Vec<IsoFlopPoint> {
    let mut v = points.to_vec();
    v.sort_by(|a, b| a.val_loss.total_cmp(&b.val_loss).then(a.params.cmp(&b.params)));
    v.truncate(k);
    v
}

#[derive(Debug, Clone)]
pub struct BudgetFit {
    pub budget: u128,
    pub points: Vec<IsoFlopPoint>,
    pub retained: Vec<IsoFlopPoint>,
    pub fit: std::result::Result<ParabolaFit, String>,
    pub d_opt: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepAnalysis {
    pub budgets: Vec<BudgetFit>,
    /// Log-linear fit of per-token forward FLOPs against parameter count.
    pub flops_per_token: PowerLawFit,
    pub n_opt_law: Option<PowerLawFit>,
    pub d_opt_law: Option<PowerLawFit>,
}

/// Per-budget parabolas over the `k` best non-data-limited points, then power
/// laws for `N_opt` and `D_opt` across budgets with a proper fit.
pub fn analyze_sweep(points: &[IsoFlopPoint], grid: &[ModelConfig], seq_len: Option<usize>, k: usize) -> Result<SweepAnalysis> {
    let pairs: Vec<(f64, f64)> = grid
        .iter()
        .map(|c| (count_params(c) as f64, forward_flops_per_token(c, seq_len.unwrap_or(c.context_len)) as f64))
        .collect();
    let flops_per_token = fit_power_law(&pairs)?;
    let mut budgets: Vec<u128> = points.iter().map(|p| p.budget).collect();
    budgets.sort_unstable();
    budgets.dedup();
    let mut fits = Vec::new();
    for b in budgets {
        let pts: Vec<IsoFlopPoint> = points.iter().filter(|p| p.budget == b).cloned().collect();
        let usable: Vec<IsoFlopPoint> = pts.iter().filter(|p| p.status == PointStatus::Ok).cloned().collect();
        let retained = select_lowest(&usable, k);
        let fit = fit_parabola(&retained.iter().map(|p| (p.params as f64, p.val_loss)).collect::<Vec<_>>())
            .map_err(|e| e.to_string());
        let d_opt = match &fit {
            Ok(f) => {
                let per_token = extrapolate(&flops_per_token, f.n_opt)?.value;
                Some((b as f64 / (3.0 * per_token)).floor())
            }
            Err(_) => None,
        };
        fits.push(BudgetFit { budget: b, points: pts, retained, fit, d_opt });
    }
    let good: Vec<&BudgetFit> = fits.iter().filter(|f| f.fit.is_ok()).collect();
    let law = |sel: &dyn Fn(&BudgetFit) -> f64| -> Option<PowerLawFit> {
        if good.len() < 2 {
            return None;
        }
        fit_power_law(&good.iter().map(|f| (f.budget as f64, sel(f))).collect::<Vec<_>>()).ok()
    };
    let n_opt_law = law(&|f| f.fit.as_ref().map(|p| p.n_opt).unwrap_or(f64::NAN));
    let d_opt_law = law(&|f| f.d_opt.unwrap_or(f64::NAN));
    Ok(SweepAnalysis { budgets: fits, flops_per_token, n_opt_law, d_opt_law })
}

pub const FIT_HEADER: &str = "budget,retained,alpha,beta,gamma,n_opt,d_opt,l_min,residual_rms,extrapolated,error";

pub fn render_fit_csv(a: &SweepAnalysis) -> String {
    let mut out = format!("{FIT_HEADER}\n");
    for b in &a.budgets {
        match &b.fit {
            Ok(f) => out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},\n",
                b.budget,
                b.retained.len(),
                f.alpha,
                f.beta,
                f.gamma,
                f.n_opt,
                b.d_opt.unwrap_or(f64::NAN),
                f.l_min,
                f.residual_rms,
                f.extrapolated
            )),
            Err(e) => out.push_str(&format!("{},{},,,,,,,,,{}\n", b.budget, b.retained.len(), e.replace(',', ";"))),
        }
    }
    out
}

pub const LAW_HEADER: &str = "quantity,exponent,log_coefficient,r2,c_min,c_max,reference_exponent";

pub fn render_law_csv(a: &SweepAnalysis) -> String {
    let mut out = format!("{LAW_HEADER}\n");
    for (name, law, reference) in
        [("n_opt", &a.n_opt_law, REFERENCE_N_EXPONENT), ("d_opt", &a.d_opt_law, REFERENCE_D_EXPONENT)]
    {
        if let Some(l) = law {
            out.push_str(&format!(
                "{name},{},{},{},{},{},{reference}\n",
                l.exponent, l.log_coefficient, l.r2, l.c_min, l.c_max
            ));
        }
    }
    let f = &a.flops_per_token;
    out.push_str(&format!("flops_per_token_vs_params,{},{},{},{},{},\n", f.exponent, f.log_coefficient, f.r2, f.c_min, f.c_max));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flops::forward_flops_per_token;

    fn point(budget: u128, id: &str, params: u64, loss: f64) -> IsoFlopPoint {
        IsoFlopPoint { budget, config_id: id.into(), params, tokens: 1, val_loss: loss, status: PointStatus::Ok }
    }

    #[test]
    fn selection_rules() {
        let pts: Vec<_> = (0..10).map(|i| point(1, &format!("m{i}"), 100 - i, (i as f64 - 4.0).abs())).collect();
        let s = select_lowest(&pts, 6);
        assert_eq!(s.len(), 6);
        assert_eq!(s[0].config_id, "m4");
        // m3 and m5 tie at loss 1; m5 has fewer parameters
        assert_eq!(s[1].config_id, "m5");
        assert_eq!(s[2].config_id, "m3");
        assert_eq!(select_lowest(&pts[..4], 6).len(), 4);
    }

    fn grid() -> Vec<ModelConfig> {
        [(32, 1), (48, 1), (64, 2), (96, 2), (128, 3)]
            .iter()
            .map(|&(d, l)| ModelConfig::scaled(200, d, l, 128))
            .collect()
    }

    #[test]
    fn sweep_counts_resumes_and_respects_budget() {
        let dir = tempfile::tempdir().unwrap();
        let opts = SweepOptions { manifest: Some(dir.path().join("m.csv")), ..Default::default() };
        let budgets = [1e10 as u128, 3e10 as u128, 1e11 as u128];
        let g = grid();
        let mut calls = 0;
        let pts = run_sweep_with(&budgets, &g, 10_000_000, 1, &opts, |job| {
            calls += 1;
            Ok(1.0 + (job.config.d_model as f64).ln() / 10.0)
        })
        .unwrap();
        assert_eq!(pts.len(), 15);
        assert_eq!(calls, 15);
        for (p, c) in pts.iter().zip(g.iter().cycle()) {
            assert!(training_flops(c, p.tokens, 128) <= p.budget);
            assert!(training_flops(c, p.tokens + 1, 128) > p.budget);
        }
        let again = run_sweep_with(&budgets, &g, 10_000_000, 1, &opts, |_| -> Result<f64> { panic!("retrained") }).unwrap();
        assert_eq!(again, pts);
        assert_eq!(read_manifest(opts.manifest.as_ref().unwrap()).unwrap(), pts);
    }

    #[test]
    fn partial_manifest_trains_only_missing_points() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let budgets = [1e10 as u128, 3e10 as u128, 1e11 as u128];
        let g = grid();
        let full = run_sweep_with(&budgets, &g, u64::MAX, 4, &SweepOptions::default(), |j| Ok(j.seed as f64 / u64::MAX as f64 + 0.5)).unwrap();
        std::fs::write(&path, render_manifest(&full[..7])).unwrap();
        let mut calls = 0;
        let opts = SweepOptions { manifest: Some(path), ..Default::default() };
        let resumed = run_sweep_with(&budgets, &g, u64::MAX, 4, &opts, |j| {
            calls += 1;
            Ok(j.seed as f64 / u64::MAX as f64 + 0.5)
        })
        .unwrap();
        assert_eq!(calls, 8);
        assert_eq!(resumed, full);
    }

    #[test]
    fn data_limited_points_are_flagged_and_excluded() {
        let budgets = [1e10 as u128, 3e10 as u128, 1e11 as u128];
        let g = grid();
        let limit = tokens_for_budget(&g[1], 3e10 as u128, 128).unwrap() as u64;
        let pts = run_sweep_with(&budgets, &g, limit, 0, &SweepOptions::default(), |j| Ok(j.config.d_model as f64)).unwrap();
        let limited: Vec<_> = pts.iter().filter(|p| p.status == PointStatus::DataLimited).collect();
        assert!(!limited.is_empty());
        assert!(limited.iter().all(|p| p.tokens > limit as u128));
        let a = analyze_sweep(&pts, &g, None, 6).unwrap();
        for b in &a.budgets {
            assert!(b.retained.iter().all(|p| p.status == PointStatus::Ok));
        }
    }

    #[test]
    fn too_few_budgets_or_models() {
        let g = grid();
        assert!(run_sweep_with(&[1, 2], &g, 1, 0, &SweepOptions::default(), |_| Ok(1.0)).is_err());
        assert!(run_sweep_with(&[1, 2, 3], &g[..3], 1, 0, &SweepOptions::default(), |_| Ok(1.0)).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let pts = vec![point(10, "a", 5, 1.5), IsoFlopPoint { status: PointStatus::DataLimited, ..point(20, "b", 7, 0.25) }];
        assert_eq!(parse_manifest(&render_manifest(&pts)).unwrap(), pts);
        assert!(parse_manifest("nope\n").is_err());
    }

    /// Loss surface `A + B / N^p + E / D^q` with `C = 3 f(N) D`. When `f` is
    /// proportional to `N`, the optimum satisfies `N_opt ~ C^(q / (p + q))`.
    #[test]
    fn recovers_analytic_exponents_on_planted_surface() {
        let (a, b, e, p, q) = (1.7, 400.0, 410.0, 0.34, 0.28);
        let per_param = 6.0;
        let ns: Vec<f64> = (0..60).map(|i| 1e5 * 1.2f64.powi(i)).collect();
        let mut n_pairs = Vec::new();
        let mut d_pairs = Vec::new();
        for k in 0..8 {
            let c = 1e17 * 4f64.powi(k);
            let pts: Vec<IsoFlopPoint> = ns
                .iter()
                .enumerate()
                .map(|(i, &n)| {
                    let d = c / (3.0 * per_param * n);
                    point(c as u128, &format!("n{i}"), n as u64, a + b / n.powf(p) + e / d.powf(q))
                })
                .collect();
            let kept = select_lowest(&pts, 6);
            let fit = fit_parabola(&kept.iter().map(|p| (p.params as f64, p.val_loss)).collect::<Vec<_>>()).unwrap();
            n_pairs.push((c, fit.n_opt));
            d_pairs.push((c, c / (3.0 * per_param * fit.n_opt)));
        }
        let (na, da) = (fit_power_law(&n_pairs).unwrap(), fit_power_law(&d_pairs).unwrap());
        assert!((na.exponent - q / (p + q)).abs() < 0.01, "{}", na.exponent);
        assert!((da.exponent - p / (p + q)).abs() < 0.01, "{}", da.exponent);
    }

    #[test]
    fn analysis_on_u_shaped_stub_losses() {
        let g = grid();
        let budgets = [1e10 as u128, 4e10 as u128, 1.6e11 as u128];
        let pts = run_sweep_with(&budgets, &g, u64::MAX, 0, &SweepOptions::default(), |j| {
            let n = count_params(j.config) as f64;
            let opt = 5e4 * (j.budget as f64 / 1e10).powf(0.5);
            Ok(2.0 + 0.1 * (n / opt).ln().powi(2))
        })
        .unwrap();
        let a = analyze_sweep(&pts, &g, None, 6).unwrap();
        let nopt: Vec<f64> = a.budgets.iter().map(|b| b.fit.as_ref().unwrap().n_opt).collect();
        assert!(nopt.windows(2).all(|w| w[1] > w[0]));
        let law = a.n_opt_law.as_ref().unwrap();
        assert!((law.exponent - 0.5).abs() < 1e-6, "{}", law.exponent);
        assert!(a.d_opt_law.is_some());
        let f = &a.flops_per_token;
        let c = &g[2];
        let predicted = extrapolate(f, count_params(c) as f64).unwrap().value;
        let actual = forward_flops_per_token(c, 128) as f64;
        assert!((predicted / actual - 1.0).abs() < 0.3);
        assert_eq!(render_fit_csv(&a).lines().count(), 4);
        assert!(render_law_csv(&a).contains("n_opt,"));
    }
}
