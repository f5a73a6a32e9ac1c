//! Command implementations. Each returns the run manifest with every
//! written artifact recorded.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cli::config::{self, EvaluateConfig, SweepConfig, TrainCommandConfig};
use crate::cli::{Cli, Command};
use crate::corpus::{generate_synthetic_cohort, SyntheticCohortConfig};
use crate::error::{Error, Result};
use crate::flops::{forward_flops_per_token, render_flops_table, tokens_for_budget};
use crate::isoflop::{
    analyze_sweep, read_manifest, render_fit_csv, render_law_csv, run_sweep, SweepAnalysis, SweepOptions,
};
use crate::metrics::{
    bootstrap_ci, empirical_auc, fit_binormal, loss_vs_metric_regression, pr_auc, render_metrics_csv, MetricsRow,
    ScoredCohort,
};
use crate::model::{count_params, evaluate_loss, render_loss_curve, train, Checkpoint, ModelConfig, StopRule};
use crate::pipeline::{prepare_corpus, read_corpus_dir, split_stats_csv, PrepareOptions, StoredCorpus};
use crate::report::{isoflop_figure, law_figure, loss_auc_figure, roc_figure, LawQuantity, RunManifest};
use crate::rng::derive_seed;
use crate::tokenizer::io::{read_events_file, write_events_file};
use crate::tokenizer::{group_by_patient, PatientTimeline};
use crate::zero_shot::{
    context_before, render_scored_csv, rollout_outcomes, score_cohort, to_metrics_cohort, EvalCase, ModelSampler, Task,
    TaskLabel, TokenRoles,
};

pub const EVENTS_FILE: &str = "events.tsv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const POINTS_FILE: &str = "points.csv";
pub const SWEEP_FILE: &str = "sweep.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const REGRESSION_FILE: &str = "regression.csv";

struct Writer<'a> {
    out: &'a Path,
    manifest: RunManifest,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, content: impl AsRef<[u8]>) -> Result<()> {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        self.manifest.add_output(self.out, name)
    }

    /// Records a file some other routine already wrote.
    fn record(&mut self, name: &str) -> Result<()> {
        self.manifest.add_output(self.out, name)
    }
}

pub fn dispatch(cli: &Cli) -> Result<RunManifest> {
    let name = cli.command.name();
    let seed_for_manifest = cli.seed.unwrap_or(0);
    let out = cli.out.as_path();
    match &cli.command {
        Command::Synth { n_patients } => {
            let (mut cfg, text): (SyntheticCohortConfig, _) = config::load(cli.config.as_deref())?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(n) = n_patients {
                cfg.n_patients = *n;
            }
            let mut w = writer(out, name, cfg.seed, text.as_deref());
            let cohort = generate_synthetic_cohort(&cfg)?;
            write_events_file(&out.join(EVENTS_FILE), cohort.iter().flatten())?;
            w.record(EVENTS_FILE)?;
            println!("{} patients, {} events", cohort.len(), cohort.iter().map(Vec::len).sum::<usize>());
            Ok(w.manifest)
        }
        Command::Tokenize { events, max_example_len } => {
            let (mut opts, text): (PrepareOptions, _) = config::load(cli.config.as_deref())?;
            if let Some(s) = cli.seed {
                opts.seed = s;
            }
            if let Some(m) = max_example_len {
                opts.max_example_len = *m;
            }
            let mut w = writer(out, name, opts.seed, text.as_deref());
            w.manifest.add_input(events)?;
            let patients = group_by_patient(read_events_file(events)?);
            let prepared = prepare_corpus(&patients, &opts)?;
            for f in prepared.write_dir(out, &opts)? {
                w.record(&f)?;
            }
            println!(
                "vocabulary {}; patients train/val/test {}/{}/{}; {} labels",
                prepared.vocab.len(),
                prepared.train.len(),
                prepared.val.len(),
                prepared.test.len(),
                prepared.test_labels.len()
            );
            Ok(w.manifest)
        }
        Command::Stats { corpus, max_example_len } => {
            let stored = read_corpus_dir(corpus)?;
            let mut opts = stored.options.clone();
            if let Some(m) = max_example_len {
                opts.max_example_len = *m;
            }
            let mut w = writer(out, name, seed_for_manifest, None);
            add_corpus_inputs(&mut w.manifest, corpus)?;
            w.put("stats.csv", split_stats_csv(stored.split_timelines(), &opts)?)?;
            Ok(w.manifest)
        }
        Command::Train { corpus, d_model, n_layers, flops_budget, token_budget } => {
            let (mut cfg, text): (TrainCommandConfig, _) = config::load(cli.config.as_deref())?;
            if let Some(s) = cli.seed {
                cfg.train.seed = s;
            }
            if let Some(d) = d_model {
                cfg.model.d_model = *d;
            }
            if let Some(l) = n_layers {
                cfg.model.n_layers = *l;
            }
            if flops_budget.is_some() {
                cfg.flops_budget = *flops_budget;
            }
            if token_budget.is_some() {
                cfg.token_budget = *token_budget;
            }
            let mut w = writer(out, name, cfg.train.seed, text.as_deref());
            add_corpus_inputs(&mut w.manifest, corpus)?;
            cmd_train(&mut w, corpus, &cfg)?;
            Ok(w.manifest)
        }
        Command::Isoflop { corpus } => {
            let (mut cfg, text): (SweepConfig, _) = config::load(cli.config.as_deref())?;
            if let Some(s) = cli.seed {
                cfg.train.seed = s;
            }
            let mut w = writer(out, name, cfg.train.seed, text.as_deref());
            add_corpus_inputs(&mut w.manifest, corpus)?;
            cmd_isoflop(&mut w, corpus, &cfg)?;
            Ok(w.manifest)
        }
        Command::Simulate { checkpoint, corpus, task, patient, n_rollouts, max_patients } => {
            let mut cfg = eval_config(cli, *n_rollouts, *max_patients)?;
            let task: Task = task.parse()?;
            let mut w = writer(out, name, cfg.0.rollout.seed, cfg.1.as_deref());
            w.manifest.add_input(checkpoint)?;
            add_corpus_inputs(&mut w.manifest, corpus)?;
            cmd_simulate(&mut w, checkpoint, corpus, task, patient, &mut cfg.0)?;
            Ok(w.manifest)
        }
        Command::Evaluate { checkpoints, corpus, task, n_rollouts, max_patients } => {
            let (cfg, text) = eval_config(cli, *n_rollouts, *max_patients)?;
            let task: Task = task.parse()?;
            let mut w = writer(out, name, cfg.rollout.seed, text.as_deref());
            for c in checkpoints {
                w.manifest.add_input(c)?;
            }
            add_corpus_inputs(&mut w.manifest, corpus)?;
            cmd_evaluate(&mut w, checkpoints, corpus, task, &cfg)?;
            Ok(w.manifest)
        }
        Command::Report => {
            let mut w = writer(out, name, seed_for_manifest, None);
            cmd_report(&mut w)?;
            Ok(w.manifest)
        }
    }
}

fn writer<'a>(out: &'a Path, command: &str, seed: u64, config_text: Option<&str>) -> Writer<'a> {
    Writer { out, manifest: RunManifest::new(command, seed, config_text) }
}

fn add_corpus_inputs(m: &mut RunManifest, corpus: &Path) -> Result<()> {
    for f in ["vocab.txt", "train.ehrt", "val.ehrt", "test.ehrt", "labels.csv", "corpus.json"] {
        m.add_input(&corpus.join(f))?;
    }
    Ok(())
}

fn eval_config(cli: &Cli, n_rollouts: Option<usize>, max_patients: Option<usize>) -> Result<(EvaluateConfig, Option<String>)> {
    let (mut cfg, text): (EvaluateConfig, _) = config::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.rollout.seed = s;
    }
    if let Some(n) = n_rollouts {
        cfg.rollout.n_rollouts = n;
    }
    if max_patients.is_some() {
        cfg.max_patients = max_patients;
    }
    cfg.rollout.validate()?;
    Ok((cfg, text))
}

fn cmd_train(w: &mut Writer<'_>, corpus: &Path, cfg: &TrainCommandConfig) -> Result<()> {
    let stored = read_corpus_dir(corpus)?;
    let model = cfg.model.build(stored.vocab.len())?;
    let train_set = stored.examples_capped(&stored.train, model.context_len);
    let val_set = stored.examples_capped(&stored.val, model.context_len);
    let stop = if let Some(b) = cfg.flops_budget {
        if !(b.is_finite() && b >= 1.0) {
            return Err(Error::invalid(format!("flops_budget {b} must be at least 1")));
        }
        StopRule::TokenBudget(tokens_for_budget(&model, b as u128, model.context_len)?.min(u64::MAX as u128) as u64)
    } else if let Some(t) = cfg.token_budget {
        StopRule::TokenBudget(t)
    } else if let Some(m) = cfg.max_steps {
        StopRule::EarlyStop { max_steps: m }
    } else {
        return Err(Error::invalid("set one of flops_budget, token_budget or max_steps"));
    };
    let outcome = train(&model, &train_set, &val_set, &cfg.train.to_train_config(stop))?;
    let fpt = forward_flops_per_token(&model, model.context_len);
    let ckpt = Checkpoint::new(outcome.params.clone())
        .with_meta("val_loss", outcome.val_loss)
        .with_meta("tokens", outcome.tokens_processed)
        .with_meta("seed", cfg.train.seed);
    w.put(CHECKPOINT_FILE, ckpt.to_bytes())?;
    w.put("loss_curve.csv", render_loss_curve(&outcome.state.history))?;
    w.put(
        "train.csv",
        format!(
            "config_id,params,tokens_processed,epochs_started,forward_flops_per_token,val_loss\n{},{},{},{},{},{}\n",
            model.id(),
            count_params(&model),
            outcome.tokens_processed,
            outcome.epochs_started,
            fpt,
            outcome.val_loss
        ),
    )?;
    println!("{}: {} tokens, validation loss {:.4}", model.id(), outcome.tokens_processed, outcome.val_loss);
    Ok(())
}

/// What `report` needs to rebuild the sweep analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SweepRecord {
    vocab_size: usize,
    config: SweepConfig,
}

fn sweep_outputs(w: &mut Writer<'_>, points: &[crate::isoflop::IsoFlopPoint], grid: &[ModelConfig], cfg: &SweepConfig) -> Result<SweepAnalysis> {
    let analysis = analyze_sweep(points, grid, cfg.flops_seq_len, cfg.retained)?;
    w.put("fits.csv", render_fit_csv(&analysis))?;
    w.put("laws.csv", render_law_csv(&analysis))?;
    w.put("isoflop.svg", isoflop_figure(points, &analysis)?)?;
    for (file, q) in [("n_opt.svg", LawQuantity::Params), ("d_opt.svg", LawQuantity::Tokens)] {
        match law_figure(&analysis, q) {
            Ok(svg) => w.put(file, svg)?,
            Err(e) => eprintln!("warning: {file} not written: {e}"),
        }
    }
    Ok(analysis)
}

fn cmd_isoflop(w: &mut Writer<'_>, corpus: &Path, cfg: &SweepConfig) -> Result<()> {
    let stored = read_corpus_dir(corpus)?;
    let grid = cfg.build_grid(stored.vocab.len())?;
    let budgets = cfg.budgets_u128()?;
    let train_set = stored.examples_capped(&stored.train, cfg.context_len);
    let val_set = stored.examples_capped(&stored.val, cfg.context_len);
    let opts = SweepOptions {
        seq_len: cfg.flops_seq_len,
        manifest: Some(w.out.join(POINTS_FILE)),
        checkpoint_dir: cfg.save_checkpoints.then(|| w.out.join("checkpoints")),
    };
    let train_cfg = cfg.train.to_train_config(StopRule::TokenBudget(0));
    let points = run_sweep(&budgets, &grid, &train_set, &val_set, &train_cfg, &opts)?;
    w.record(POINTS_FILE)?;
    if cfg.save_checkpoints {
        for p in &points {
            let name = format!("checkpoints/{}", crate::isoflop::checkpoint_name(p.budget, &p.config_id));
            if w.out.join(&name).exists() {
                w.record(&name)?;
            }
        }
    }
    let record = SweepRecord { vocab_size: stored.vocab.len(), config: cfg.clone() };
    w.put(SWEEP_FILE, json(&record)?)?;
    w.put("flops.csv", render_flops_table(&grid, cfg.flops_seq_len.unwrap_or(cfg.context_len)))?;
    let analysis = sweep_outputs(w, &points, &grid, cfg)?;
    if let Some(l) = &analysis.n_opt_law {
        println!("N_opt ~ C^{:.3} (r2 {:.3})", l.exponent, l.r2);
    }
    Ok(())
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| Error::Format { what: "json", message: e.to_string() })
}

/// Labelled held-out cases for `task`, plus the labels that could not be
/// placed (unknown patient or anchor outside the timeline).
fn eval_cases<'a>(
    stored: &'a StoredCorpus,
    task: Task,
    only: &[String],
    limit: Option<usize>,
) -> (Vec<EvalCase<'a>>, Vec<(&'a TaskLabel, String)>) {
    let by_id: HashMap<&str, &PatientTimeline> = stored.test.iter().map(|t| (t.patient_id.as_str(), t)).collect();
    let mut cases = Vec::new();
    let mut skipped = Vec::new();
    for l in stored.test_labels.iter().filter(|l| l.task == task) {
        if !only.is_empty() && !only.contains(&l.patient_id) {
            continue;
        }
        if limit.is_some_and(|n| cases.len() >= n) {
            break;
        }
        match by_id.get(l.patient_id.as_str()) {
            None => skipped.push((l, "patient not in the test split".to_string())),
            Some(t) if l.anchor >= t.tokens.len() => {
                skipped.push((l, format!("anchor {} beyond timeline of {} tokens", l.anchor, t.tokens.len())))
            }
            Some(t) => cases.push(EvalCase { patient_id: &t.patient_id, tokens: &t.tokens, anchor: l.anchor, label: l.label }),
        }
    }
    (cases, skipped)
}

fn report_skipped(w: &mut Writer<'_>, skipped: &[(&TaskLabel, String)]) -> Result<()> {
    if skipped.is_empty() {
        return Ok(());
    }
    let mut csv = String::from("patient_id,task,anchor,reason\n");
    for (l, why) in skipped {
        eprintln!("warning: skipping {} ({}): {why}", l.patient_id, l.task);
        let _ = writeln!(csv, "{},{},{},{}", l.patient_id, l.task, l.anchor, why.replace(',', ";"));
    }
    w.put("skipped.csv", csv)
}

fn sampler_window(cfg: &EvaluateConfig, model: &ModelConfig) -> usize {
    cfg.rollout.context_window.min(model.context_len)
}

fn cmd_simulate(
    w: &mut Writer<'_>,
    checkpoint: &Path,
    corpus: &Path,
    task: Task,
    patients: &[String],
    cfg: &mut EvaluateConfig,
) -> Result<()> {
    let ckpt = Checkpoint::read(checkpoint)?;
    let stored = read_corpus_dir(corpus)?;
    check_vocab(&ckpt, &stored)?;
    let roles = TokenRoles::from_vocab(&stored.vocab);
    let (cases, skipped) = eval_cases(&stored, task, patients, cfg.max_patients);
    report_skipped(w, &skipped)?;
    if cases.is_empty() {
        return Err(Error::EmptyInput("patients with a determinable anchor"));
    }
    cfg.rollout.context_window = sampler_window(cfg, &ckpt.params.config);
    let sampler = ModelSampler { params: &ckpt.params, window: cfg.rollout.context_window, temperature: cfg.rollout.temperature };
    let rows: Vec<String> = cases
        .par_iter()
        .map(|c| {
            let ctx = context_before(c.tokens, c.anchor, cfg.rollout.context_window)?;
            let outs = rollout_outcomes(&sampler, &roles, ctx, task, c.patient_id, &cfg.rollout)?;
            let mut s = String::new();
            for (r, o) in outs.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    c.patient_id,
                    task,
                    r,
                    o.terminal.name(),
                    o.tokens_generated,
                    o.simulated_elapsed_minutes
                );
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    w.put(
        "rollouts.csv",
        format!("patient_id,task,rollout,terminal,tokens_generated,elapsed_minutes\n{}", rows.concat()),
    )?;
    let scored = score_cohort(&sampler, &roles, &cases, task, &cfg.rollout)?;
    w.put("risk.csv", render_scored_csv(&scored))?;
    Ok(())
}

fn check_vocab(ckpt: &Checkpoint, stored: &StoredCorpus) -> Result<()> {
    if ckpt.params.config.vocab_size != stored.vocab.len() {
        return Err(Error::invalid(format!(
            "checkpoint vocabulary {} does not match corpus vocabulary {}",
            ckpt.params.config.vocab_size,
            stored.vocab.len()
        )));
    }
    Ok(())
}

fn model_label(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let parent = path.parent().and_then(|p| p.file_name()).and_then(|s| s.to_str());
    let raw = match (stem, parent) {
        ("checkpoint", Some(p)) => p.to_string(),
        _ => stem.to_string(),
    };
    raw.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}

struct ModelResult {
    id: String,
    params: u64,
    val_loss: f64,
    cohort: ScoredCohort,
}

fn cmd_evaluate(w: &mut Writer<'_>, checkpoints: &[std::path::PathBuf], corpus: &Path, task: Task, cfg: &EvaluateConfig) -> Result<()> {
    let stored = read_corpus_dir(corpus)?;
    let roles = TokenRoles::from_vocab(&stored.vocab);
    let (cases, skipped) = eval_cases(&stored, task, &[], cfg.max_patients);
    report_skipped(w, &skipped)?;
    if cases.is_empty() {
        return Err(Error::EmptyInput("patients with a determinable anchor"));
    }
    let mut results = Vec::new();
    let mut seen = HashMap::new();
    for path in checkpoints {
        let ckpt = Checkpoint::read(path)?;
        check_vocab(&ckpt, &stored)?;
        let mut id = model_label(path);
        let n = seen.entry(id.clone()).or_insert(0usize);
        *n += 1;
        if *n > 1 {
            id = format!("{id}-{n}");
        }
        let model = &ckpt.params.config;
        let val_loss = match ckpt.meta_f64("val_loss").filter(|v| v.is_finite()) {
            Some(v) => v,
            None => evaluate_loss(&ckpt.params, &stored.examples_capped(&stored.val, model.context_len))?,
        };
        let mut rollout = cfg.rollout.clone();
        rollout.context_window = sampler_window(cfg, model);
        let sampler = ModelSampler { params: &ckpt.params, window: rollout.context_window, temperature: rollout.temperature };
        let scored = score_cohort(&sampler, &roles, &cases, task, &rollout)?;
        w.put(&format!("scored_{id}.csv"), render_scored_csv(&scored))?;
        let cohort = to_metrics_cohort(&scored)?;
        println!("{id}: {} patients scored", scored.len());
        results.push(ModelResult { id, params: count_params(model), val_loss, cohort });
    }

    let mut rows = Vec::new();
    let mut binormal_csv = String::from("model_id,mu0,sigma0,mu1,sigma1,binormal_auc\n");
    for r in &results {
        let seed = derive_seed(cfg.rollout.seed, &format!("bootstrap/{}", r.id), 0);
        let roc = bootstrap_ci(&r.cohort, empirical_auc, cfg.bootstrap_resamples, cfg.confidence_level, seed)?;
        let pr = bootstrap_ci(&r.cohort, pr_auc, cfg.bootstrap_resamples, cfg.confidence_level, seed ^ 1)?;
        let binormal = fit_binormal(&r.cohort, cfg.rollout.n_rollouts).ok();
        if let Some(b) = &binormal {
            let _ = writeln!(binormal_csv, "{},{},{},{},{},{}", r.id, b.mu0, b.sigma0, b.mu1, b.sigma1, b.auc);
        }
        w.put(&format!("roc_{}.svg", r.id), roc_figure(&r.id, &r.cohort, binormal.as_ref(), roc.estimate)?)?;
        rows.push(MetricsRow {
            model_id: r.id.clone(),
            params: r.params,
            val_loss: r.val_loss,
            task: task.to_string(),
            roc_auc: roc,
            pr_auc: pr,
        });
    }
    w.put(METRICS_FILE, render_metrics_csv(&rows))?;
    w.put("binormal.csv", binormal_csv)?;
    loss_auc_outputs(w, task.name(), &rows.iter().map(|r| (r.model_id.clone(), r.val_loss, r.roc_auc.estimate)).collect::<Vec<_>>())
}

fn loss_auc_outputs(w: &mut Writer<'_>, task: &str, pts: &[(String, f64, f64)]) -> Result<()> {
    if pts.len() < 2 {
        return Ok(());
    }
    let mut table = String::from("model_id,val_loss,roc_auc\n");
    for (id, loss, auc) in pts {
        let _ = writeln!(table, "{id},{loss},{auc}");
    }
    w.put("loss_auc.csv", table)?;
    match loss_vs_metric_regression(&pts.iter().map(|p| (p.1, p.2)).collect::<Vec<_>>()) {
        Ok(fit) => {
            w.put(REGRESSION_FILE, format!("slope,intercept,correlation\n{},{},{}\n", fit.slope, fit.intercept, fit.correlation))?;
            w.put("loss_vs_auc.svg", loss_auc_figure(task, pts, &fit)?)?;
            println!("loss vs AUC: slope {:.4}, r {:.3}", fit.slope, fit.correlation);
        }
        Err(e) => eprintln!("warning: no loss-vs-AUC regression: {e}"),
    }
    Ok(())
}

/// Rows `(model_id, val_loss, roc_auc, task)` of a metrics CSV.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<(String, f64, f64, String)>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |name: &str| {
        header.iter().position(|h| *h == name).ok_or_else(|| Error::Parse { line: 1, message: format!("missing column {name}") })
    };
    let (id, loss, auc, task) = (col("model_id")?, col("val_loss")?, col("roc_auc")?, col("task")?);
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |j: usize| {
                f.get(j).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| Error::Parse { line: i + 2, message: "bad number".into() })
            };
            Ok((f[id].to_string(), num(loss)?, num(auc)?, f.get(task).unwrap_or(&"").to_string()))
        })
        .collect()
}

fn cmd_report(w: &mut Writer<'_>) -> Result<()> {
    let out = w.out.to_path_buf();
    let mut did = false;
    let points_path = out.join(POINTS_FILE);
    if points_path.exists() {
        let text = std::fs::read_to_string(out.join(SWEEP_FILE)).map_err(|e| Error::io(&out.join(SWEEP_FILE), e))?;
        let record: SweepRecord =
            serde_json::from_str(&text).map_err(|e| Error::Format { what: "sweep record", message: e.to_string() })?;
        let grid = record.config.build_grid(record.vocab_size)?;
        let points = read_manifest(&points_path)?;
        w.manifest.add_input(&points_path)?;
        sweep_outputs(w, &points, &grid, &record.config)?;
        did = true;
    }
    let metrics_path = out.join(METRICS_FILE);
    if metrics_path.exists() {
        let text = std::fs::read_to_string(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
        let rows = parse_metrics_csv(&text)?;
        w.manifest.add_input(&metrics_path)?;
        let task = rows.first().map(|r| r.3.clone()).unwrap_or_default();
        loss_auc_outputs(w, &task, &rows.into_iter().map(|r| (r.0, r.1, r.2)).collect::<Vec<_>>())?;
        did = true;
    }
    if !did {
        return Err(Error::invalid(format!("{} has neither {POINTS_FILE} nor {METRICS_FILE}", out.display())));
    }
    Ok(())
}
