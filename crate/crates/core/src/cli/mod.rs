//! Command-line front end. Each command reads its inputs, writes artifacts
//! under `--out`, records them with digests in a run manifest and checks the
//! written digests before exiting.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::report::{manifests_in, OutDirLock, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "ehr-scaling", version, about = "Scaling-law experiments on tokenized patient timelines")]
pub struct Cli {
    /// Seed overriding the config file's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML config for the command; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Re-check the digests in the command's manifest instead of running it.
    #[arg(long, global = true)]
    pub verify: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort as an events file.
    ///
    /// Config keys (defaults): n_patients = 1000, mean_admissions = 2.0,
    /// labs_per_admission = 6, medication_rate = 0.5, icu_rate = 0.5,
    /// base_icu_mortality = 0.2, readmission_hazard = 0.2,
    /// lab_hazard_coupling = 6.0, seed = 0.
    Synth {
        #[arg(long)]
        n_patients: Option<usize>,
    },
    /// Split, bin, tokenize and segment an events file into a corpus directory.
    ///
    /// Config keys (defaults): bin_count = 10, min_group_size = 50,
    /// split = [0.8, 0.1, 0.1], seed = 0, max_example_len = 2048,
    /// min_example_len = 32.
    Tokenize {
        events: PathBuf,
        #[arg(long)]
        max_example_len: Option<usize>,
    },
    /// Recompute the per-split timeline statistics of a corpus directory.
    Stats {
        corpus: PathBuf,
        #[arg(long)]
        max_example_len: Option<usize>,
    },
    /// Train one model on a corpus directory.
    ///
    /// Config keys (defaults): flops_budget, token_budget, max_steps (one is
    /// required, in that priority); [model] d_model = 16, n_layers = 2,
    /// n_heads, n_kv_heads, d_ff, context_len = 256; [train]
    /// tokens_per_batch = 256, peak_lr, weight_decay = 0.1,
    /// max_val_examples = 300, val_every, patience = 5, seed = 0.
    Train {
        corpus: PathBuf,
        #[arg(long)]
        d_model: Option<usize>,
        #[arg(long)]
        n_layers: Option<usize>,
        #[arg(long)]
        flops_budget: Option<f64>,
        #[arg(long)]
        token_budget: Option<u64>,
    },
    /// Run (or resume) an IsoFLOP sweep and fit compute-optimal laws.
    ///
    /// Config keys (defaults): budgets = [2.8e9, 4.5e9, 7e9], [[grid]]
    /// d_model/n_layers = 4/2, 8/2, 12/2, 16/2, 24/2, context_len = 256,
    /// flops_seq_len, retained = 5, save_checkpoints = true, [train] as for
    /// `train`.
    Isoflop { corpus: PathBuf },
    /// Write per-rollout outcomes for held-out patients.
    ///
    /// Config keys as for `evaluate`.
    Simulate {
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "icu_mortality")]
        task: String,
        /// Restrict to these patient ids (repeatable).
        #[arg(long)]
        patient: Vec<String>,
        #[arg(long)]
        n_rollouts: Option<usize>,
        #[arg(long)]
        max_patients: Option<usize>,
    },
    /// Score held-out patients with each checkpoint and report metrics.
    ///
    /// Config keys (defaults): [rollout] n_rollouts = 20, context_window =
    /// 256, max_generated_tokens = 512, temperature = 1.0, seed = 0;
    /// bootstrap_resamples = 1000, confidence_level = 0.95, max_patients.
    Evaluate {
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "icu_mortality")]
        task: String,
        #[arg(long)]
        n_rollouts: Option<usize>,
        #[arg(long)]
        max_patients: Option<usize>,
    },
    /// Re-render figures and fits from the CSV tables in `--out`.
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Tokenize { .. } => "tokenize",
            Command::Stats { .. } => "stats",
            Command::Train { .. } => "train",
            Command::Isoflop { .. } => "isoflop",
            Command::Simulate { .. } => "simulate",
            Command::Evaluate { .. } => "evaluate",
            Command::Report => "report",
        }
    }
}

/// Digest check of the manifests in `out`: only `command`'s, or all of them
/// for `report`. Returns the number of artifacts checked.
pub fn verify_outputs(cli: &Cli) -> Result<usize> {
    let name = cli.command.name();
    let paths = if name == "report" {
        manifests_in(&cli.out)?
    } else {
        vec![cli.out.join(RunManifest::file_name(name))]
    };
    if paths.is_empty() {
        return Err(Error::invalid(format!("no manifests in {}", cli.out.display())));
    }
    let mut checked = 0;
    for p in paths {
        let m = RunManifest::read(&p)?;
        let bad = m.verify(&cli.out);
        if !bad.is_empty() {
            return Err(Error::Format {
                what: "outputs",
                message: format!("{} lists changed or missing files: {}", p.display(), bad.join(", ")),
            });
        }
        checked += m.outputs.len();
    }
    Ok(checked)
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        // a pool may already exist when called in-process; keep it
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    if cli.verify {
        let n = verify_outputs(cli)?;
        println!("verified {n} artifacts");
        return Ok(());
    }
    let lock = OutDirLock::acquire(&cli.out)?;
    let manifest = commands::dispatch(cli)?;
    let path = manifest.finish(&cli.out)?;
    drop(lock);
    let m = RunManifest::read(&path)?;
    let bad = m.verify(&cli.out);
    if !bad.is_empty() {
        return Err(Error::Format { what: "outputs", message: format!("digest mismatch after write: {}", bad.join(", ")) });
    }
    println!("wrote {} artifacts; manifest {}", m.outputs.len(), path.display());
    Ok(())
}

/// Entry point used by the binary.
pub fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}
