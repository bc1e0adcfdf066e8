//! `pdeattn`: evolve attention fields, run the verification suites, train
//! toy models, time step kernels and sweep ablations.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_override, ExperimentConfig};
use crate::error::CliError;
use crate::output::{default_jobs, resolve_dir, RunDir};

#[derive(Parser, Debug)]
#[command(name = "pdeattn", version, about = "Experiments with PDE-guided attention")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config file; flags and --set override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. --set evolve.pde.alpha=0.2 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override, global = true)]
    overrides: Vec<(String, String)>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: $PDEATTN_OUT_DIR/<command>, else runs/<command>].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads for verify and ablate.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve one attention field and write its trajectory.
    Evolve(EvolveArgs),
    /// Run verification suites; exits 1 if any report fails.
    Verify {
        /// Suites to run (default: all).
        suites: Vec<String>,
    },
    /// Train a toy model and write its training record and checkpoint.
    Train(TrainArgs),
    /// Time one step of each PDE kind across sequence lengths.
    Bench {
        /// Comma-separated sequence lengths.
        #[arg(long = "T", value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Sweep pseudo-time steps or PDE kinds on the recall task.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
struct EvolveArgs {
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// onehot | uniform | softmax | file
    #[arg(long)]
    init: Option<String>,
    #[arg(long = "T")]
    t: Option<usize>,
    /// Square CSV matrix for --init file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// periodic | zero_flux
    #[arg(long)]
    bc: Option<String>,
    /// per_row1d | full2d
    #[arg(long)]
    axis: Option<String>,
    #[arg(long)]
    causal: bool,
    /// Disable the CFL check.
    #[arg(long)]
    no_guard: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// copy_task | long_range_recall | char_text
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    text: Option<PathBuf>,
    /// standard | pde | hybrid
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// sgd | adam
    #[arg(long)]
    optimizer: Option<String>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// steps | kind
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated step counts for the steps axis.
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    #[arg(long)]
    samples: Option<usize>,
}

fn quoted(s: &str) -> String {
    format!("{s:?}")
}

fn list<T: ToString>(xs: &[T]) -> String {
    let parts: Vec<String> = xs.iter().map(T::to_string).collect();
    format!("[{}]", parts.join(","))
}

/// Subcommand flags, expressed as config overrides applied after `--set`.
fn flag_overrides(cmd: &Command) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            out.push((k.to_string(), v));
        }
    };
    match cmd {
        Command::Evolve(a) => {
            put("evolve.pde.kind", a.kind.as_deref().map(quoted));
            put("evolve.pde.alpha", a.alpha.map(|v| format!("{v:?}")));
            put("evolve.pde.beta", a.beta.map(|v| format!("{v:?}")));
            put("evolve.pde.c", a.c.map(|v| format!("{v:?}")));
            put("evolve.pde.dt", a.dt.map(|v| format!("{v:?}")));
            put("evolve.pde.n_steps", a.steps.map(|v| v.to_string()));
            put("evolve.init", a.init.as_deref().map(quoted));
            put("evolve.T", a.t.map(|v| v.to_string()));
            put("evolve.input", a.input.as_ref().map(|p| quoted(&p.to_string_lossy())));
            put("evolve.pde.bc", a.bc.as_deref().map(quoted));
            put("evolve.pde.axis", a.axis.as_deref().map(quoted));
            put("evolve.causal", a.causal.then(|| "true".into()));
            put("evolve.pde.stability_guard", a.no_guard.then(|| "false".into()));
        }
        Command::Verify { suites } => {
            if !suites.is_empty() {
                let q: Vec<String> = suites.iter().map(|s| quoted(s)).collect();
                put("verify.suites", Some(format!("[{}]", q.join(","))));
            }
        }
        Command::Train(a) => {
            put("train.dataset.kind", a.dataset.as_deref().map(quoted));
            put("train.dataset.text_path", a.text.as_ref().map(|p| quoted(&p.to_string_lossy())));
            put("train.model.attention_variant", a.variant.as_deref().map(quoted));
            put("train.model.pde.kind", a.kind.as_deref().map(quoted));
            put("train.model.pde.n_steps", a.steps.map(|v| v.to_string()));
            put("train.optimizer.epochs", a.epochs.map(|v| v.to_string()));
            put("train.optimizer.lr", a.lr.map(|v| format!("{v:?}")));
            put("train.optimizer.optimizer", a.optimizer.as_deref().map(quoted));
        }
        Command::Bench { sizes } => put("bench.T", sizes.as_deref().map(list)),
        Command::Ablate(a) => {
            put("ablate.axis", a.axis.as_deref().map(quoted));
            put("ablate.seeds", a.seeds.as_deref().map(list));
            put("ablate.train.epochs", a.epochs.map(|v| v.to_string()));
            put("ablate.steps", a.steps.as_deref().map(list));
            put("ablate.n_samples", a.samples.map(|v| v.to_string()));
        }
    }
    out
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Evolve(_) => "evolve",
        Command::Verify { .. } => "verify",
        Command::Train(_) => "train",
        Command::Bench { .. } => "bench",
        Command::Ablate(_) => "ablate",
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.common.overrides.clone();
    overrides.extend(flag_overrides(&cli.command));
    if let Some(seed) = cli.common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    let mut cfg: ExperimentConfig = config::load(cli.common.config.as_deref(), &overrides)?;
    let name = command_name(&cli.command);
    let jobs = cli.common.jobs.unwrap_or_else(default_jobs);

    // validate before touching the filesystem
    let data = match cli.command {
        Command::Train(_) => Some(commands::resolve_train(&mut cfg)?),
        Command::Evolve(_) => {
            cfg.evolve.pde.validate()?;
            None
        }
        Command::Ablate(_) => {
            cfg.ablate.validate()?;
            None
        }
        Command::Verify { .. } => {
            commands::suite_names(&cfg)?;
            None
        }
        Command::Bench { .. } => None,
    };
    let dir = RunDir::create(resolve_dir(cli.common.out.as_deref(), &cfg, name), cli.common.force, name, &cfg)?;
    let result = match cli.command {
        Command::Evolve(_) => commands::evolve_cmd(&cfg, &dir),
        Command::Verify { .. } => commands::verify_cmd(&cfg, &dir, jobs),
        Command::Train(_) => commands::train_cmd(&cfg, data.as_ref().expect("resolved above"), &dir),
        Command::Bench { .. } => commands::bench_cmd(&cfg, &dir),
        Command::Ablate(_) => commands::ablate_cmd(&cfg, &dir, jobs),
    };
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => e.to_string(),
    };
    dir.finish(&status)?;
    eprintln!("outputs in {}", dir.path.display());
    result
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
