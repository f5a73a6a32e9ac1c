//! End-to-end runs of the `ehr-scaling` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ehr_scaling::cli::config::SweepConfig;
use ehr_scaling::isoflop::{render_manifest, IsoFlopPoint, PointStatus};
use ehr_scaling::model::{count_params, init_params, Checkpoint};
use ehr_scaling::tokenizer::Vocabulary;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ehr-scaling"))
}

fn run(out: &Path, args: &[&str]) -> Output {
    bin().arg("--out").arg(out).args(args).output().unwrap()
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = run(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthesized and tokenized corpus in `dir/corpus`.
fn corpus(dir: &Path, n: usize) -> PathBuf {
    let c = dir.join("corpus");
    ok(&c, &["--seed", "3", "synth", "--n-patients", &n.to_string()]);
    ok(&c, &["tokenize", s(&c.join("events.tsv")), "--max-example-len", "256"]);
    c
}

fn csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn synth_is_deterministic_per_seed() {
    let d = tempfile::tempdir().unwrap();
    let (a, b, c) = (d.path().join("a"), d.path().join("b"), d.path().join("c"));
    ok(&a, &["--seed", "5", "synth", "--n-patients", "40"]);
    ok(&b, &["--seed", "5", "synth", "--n-patients", "40"]);
    ok(&c, &["--seed", "6", "synth", "--n-patients", "40"]);
    let read = |p: &Path| std::fs::read(p.join("events.tsv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn malformed_event_line_reports_its_number() {
    let d = tempfile::tempdir().unwrap();
    let ev = d.path().join("events.tsv");
    std::fs::write(
        &ev,
        "patient_id\tage_minutes\tkind\tcode\tvalue\np1\t100\tDiagnosis\tI21\t\np1\tsoon\tDiagnosis\tI22\t\n",
    )
    .unwrap();
    let o = run(&d.path().join("out"), &["tokenize", s(&ev)]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn tokenize_writes_corpus_and_stats_rows() {
    let d = tempfile::tempdir().unwrap();
    let c = corpus(d.path(), 120);
    for f in ["vocab.txt", "train.ehrt", "val.ehrt", "test.ehrt", "labels.csv", "stats.csv", "corpus.json"] {
        assert!(c.join(f).exists(), "{f}");
    }
    let st = d.path().join("stats");
    ok(&st, &["stats", s(&c)]);
    let rows = csv(&st.join("stats.csv"));
    assert_eq!(rows[0], ["statistic", "train", "val", "test"]);
    let names: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    for want in ehr_scaling::corpus::stats::STATS_ROWS {
        assert!(names.contains(&want), "missing row {want}");
    }
    let patients: usize = rows.iter().find(|r| r[0] == "patients").unwrap()[1..].iter().map(|v| v.parse::<usize>().unwrap()).sum();
    assert_eq!(patients, 120);
    assert_eq!(std::fs::read(st.join("stats.csv")).unwrap(), std::fs::read(c.join("stats.csv")).unwrap());
}

#[test]
fn help_lists_defaults() {
    let o = bin().args(["synth", "--help"]).output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("n_patients = 1000"), "{text}");
    assert!(text.contains("lab_hazard_coupling = 6.0"), "{text}");
    let o = bin().args(["tokenize", "--help"]).output().unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).contains("max_example_len = 2048"));
}

fn svg_doc(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{} is not well-formed: {e}", path.display()));
    text
}

fn num(n: &roxmltree::Node, a: &str) -> f64 {
    n.attribute(a).unwrap().parse().unwrap()
}

/// Planted IsoFLOP points whose optimum moves right with budget.
fn planted_sweep(out: &Path) {
    std::fs::create_dir_all(out).unwrap();
    let cfg = SweepConfig::default();
    let grid = cfg.build_grid(64).unwrap();
    let mut pts = Vec::new();
    for (k, &budget) in cfg.budgets.iter().enumerate() {
        let centre = 8.4 + 0.3 * k as f64;
        for c in &grid {
            let n = count_params(c);
            pts.push(IsoFlopPoint {
                budget: budget as u128,
                config_id: c.id(),
                params: n,
                tokens: 1000,
                val_loss: 1.0 + 0.4 * ((n as f64).ln() - centre).powi(2),
                status: PointStatus::Ok,
            });
        }
    }
    std::fs::write(out.join("points.csv"), render_manifest(&pts)).unwrap();
    let record = serde_json::json!({ "vocab_size": 64, "config": cfg });
    std::fs::write(out.join("sweep.json"), record.to_string()).unwrap();
}

#[test]
fn report_figures_parse_back_to_the_tables() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("sweep");
    planted_sweep(&out);
    ok(&out, &["report"]);

    let laws = csv(&out.join("laws.csv"));
    let n_row = laws.iter().find(|r| r[0] == "n_opt").unwrap();
    let svg = svg_doc(&out.join("n_opt.svg"));
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let line = doc.descendants().find(|n| n.has_tag_name("line") && n.attribute("class") == Some("fit")).unwrap();
    assert_eq!(num(&line, "data-slope"), n_row[1].parse::<f64>().unwrap());
    assert_eq!(num(&line, "data-intercept"), n_row[2].parse::<f64>().unwrap());

    let fits = csv(&out.join("fits.csv"));
    let svg = svg_doc(&out.join("isoflop.svg"));
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let optima: Vec<(f64, f64)> = doc
        .descendants()
        .filter(|n| n.has_tag_name("g") && n.attribute("class") == Some("series optimum"))
        .flat_map(|g| g.children().filter(|c| c.has_tag_name("circle")).map(|c| (num(&c, "data-x"), num(&c, "data-y"))).collect::<Vec<_>>())
        .collect();
    assert_eq!(optima.len(), fits.len() - 1);
    for (row, (x, y)) in fits[1..].iter().zip(&optima) {
        assert_eq!(*x, row[5].parse::<f64>().unwrap());
        assert_eq!(*y, row[7].parse::<f64>().unwrap());
    }
    svg_doc(&out.join("d_opt.svg"));
    ok(&out, &["--verify", "report"]);
}

fn tiny_sweep_config(dir: &Path) -> PathBuf {
    let p = dir.join("sweep.toml");
    std::fs::write(
        &p,
        "budgets = [1e8, 2e8, 4e8]\nretained = 4\nsave_checkpoints = false\n\
         [[grid]]\nd_model = 4\nn_layers = 1\n[[grid]]\nd_model = 8\nn_layers = 1\n\
         [[grid]]\nd_model = 12\nn_layers = 1\n[[grid]]\nd_model = 16\nn_layers = 1\n",
    )
    .unwrap();
    p
}

#[test]
fn isoflop_sweep_resumes_from_its_points_table() {
    let d = tempfile::tempdir().unwrap();
    let c = corpus(d.path(), 150);
    let cfg = tiny_sweep_config(d.path());
    let full = d.path().join("full");
    ok(&full, &["--config", s(&cfg), "isoflop", s(&c)]);
    let reference = std::fs::read_to_string(full.join("points.csv")).unwrap();
    assert_eq!(reference.lines().count(), 1 + 12);
    for f in ["fits.csv", "laws.csv", "flops.csv", "isoflop.svg", "sweep.json"] {
        assert!(full.join(f).exists(), "{f}");
    }
    svg_doc(&full.join("isoflop.svg"));

    // keep the first five points, as if interrupted
    let part = d.path().join("part");
    std::fs::create_dir_all(&part).unwrap();
    let head: String = reference.lines().take(6).map(|l| format!("{l}\n")).collect();
    std::fs::write(part.join("points.csv"), head).unwrap();
    ok(&part, &["--config", s(&cfg), "isoflop", s(&c)]);
    assert_eq!(std::fs::read_to_string(part.join("points.csv")).unwrap(), reference);
    assert_eq!(std::fs::read(part.join("fits.csv")).unwrap(), std::fs::read(full.join("fits.csv")).unwrap());
}

#[test]
fn evaluate_runs_on_an_untrained_checkpoint() {
    let d = tempfile::tempdir().unwrap();
    let c = corpus(d.path(), 300);
    let vocab = Vocabulary::read(&c.join("vocab.txt")).unwrap();
    let cfg = ehr_scaling::model::ModelConfig::scaled(vocab.len(), 8, 1, 64);
    let ckpt_a = d.path().join("small.bin");
    let ckpt_b = d.path().join("other.bin");
    Checkpoint::new(init_params(&cfg, 1).unwrap()).with_meta("val_loss", 5.0).write(&ckpt_a).unwrap();
    Checkpoint::new(init_params(&cfg, 2).unwrap()).write(&ckpt_b).unwrap();

    // a label for an unknown patient is reported and skipped
    let labels = c.join("labels.csv");
    let text = std::fs::read_to_string(&labels).unwrap();
    let (header, rest) = text.split_once('\n').unwrap();
    std::fs::write(&labels, format!("{header}\nNOPE,icu_mortality,3,1\n{rest}")).unwrap();

    let ev = d.path().join("eval");
    let o = run(&ev, &["evaluate", s(&ckpt_a), s(&ckpt_b), "--corpus", s(&c), "--n-rollouts", "2", "--max-patients", "12"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("NOPE"));
    assert!(csv(&ev.join("skipped.csv")).iter().any(|r| r[0] == "NOPE"));
    let metrics = csv(&ev.join("metrics.csv"));
    assert_eq!(metrics.len(), 3);
    assert_eq!(metrics[1][0], "small");
    assert_eq!(metrics[1][2].parse::<f64>().unwrap(), 5.0);
    for r in &metrics[1..] {
        let auc: f64 = r[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&auc));
    }
    for f in ["scored_small.csv", "scored_other.csv", "roc_small.svg", "loss_vs_auc.svg", "regression.csv"] {
        assert!(ev.join(f).exists(), "{f}");
    }
    svg_doc(&ev.join("roc_small.svg"));
    svg_doc(&ev.join("loss_vs_auc.svg"));

    let sim = d.path().join("sim");
    ok(&sim, &["simulate", s(&ckpt_a), "--corpus", s(&c), "--n-rollouts", "3", "--max-patients", "4"]);
    let rows = csv(&sim.join("rollouts.csv"));
    assert_eq!(rows[0], ["patient_id", "task", "rollout", "terminal", "tokens_generated", "elapsed_minutes"]);
    assert_eq!(rows.len() - 1, 3 * (csv(&sim.join("risk.csv")).len() - 1));
}

#[test]
fn verify_detects_edited_outputs_and_lock_blocks_runs() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    ok(&out, &["synth", "--n-patients", "10"]);
    assert!(ok(&out, &["--verify", "synth"]).contains("verified 1"));
    std::fs::write(out.join("events.tsv"), "edited\n").unwrap();
    let o = run(&out, &["--verify", "synth"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("events.tsv"));

    std::fs::write(out.join(ehr_scaling::report::LOCK_FILE), "").unwrap();
    let o = run(&out, &["synth", "--n-patients", "10"]);
    assert!(!o.status.success());
}

#[test]
fn train_writes_checkpoint_and_curve() {
    let d = tempfile::tempdir().unwrap();
    let c = corpus(d.path(), 100);
    let out = d.path().join("train");
    ok(&out, &["train", s(&c), "--d-model", "8", "--n-layers", "1", "--token-budget", "4000"]);
    let ck = Checkpoint::read(&out.join("checkpoint.bin")).unwrap();
    assert_eq!(ck.params.config.d_model, 8);
    assert!(ck.meta_f64("val_loss").unwrap().is_finite());
    let rows = csv(&out.join("train.csv"));
    assert!(rows[1][2].parse::<u64>().unwrap() >= 3500);
    assert!(csv(&out.join("loss_curve.csv")).len() > 1);
    let o = run(&d.path().join("none"), &["train", s(&c)]);
    assert!(!o.status.success(), "no stopping rule must be an error");
}
