//! `dccl`: prepare, train, eval, ood and synth commands over a flat
//! key=value configuration.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage or config error,
//! 3 empty dataset after filtering, 4 missing or unreadable input,
//! 5 infeasible OOD proportion.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dccl_core::config::RunConfig;
use dccl_core::pipeline::{
    cmd_eval, cmd_ood, cmd_prepare, cmd_synth, cmd_train, create_run_dir, model_label,
};
use dccl_core::Error;

const THREADS_ENV: &str = "DCCL_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "dccl",
    version,
    about = "Disentangled interest/conformity recommender pipeline"
)]
struct Cli {
    /// Flat key=value config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Root directory for run directories.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Any config key, e.g. `--set alpha=0.2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Binarize, k-core filter, split and compute popularity.
    Prepare(PrepareArgs),
    /// Train on a prepared data directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the prepared test split.
    Eval(EvalArgs),
    /// Evaluate a checkpoint on popularity-intervened test sets.
    Ood(OodArgs),
    /// Generate a synthetic world, train on it and report disentanglement.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct PrepareArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// csv or tsv
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    k_core: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// mf or lightgcn
    #[arg(long)]
    backbone: Option<String>,
    /// weighted or literal
    #[arg(long)]
    loss_mode: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Prepared data directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Args)]
struct OodArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Comma-separated popular-item proportions.
    #[arg(long)]
    proportions: Option<String>,
    /// Comma-separated resampling seeds.
    #[arg(long)]
    ood_seeds: Option<String>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    model: ModelArgs,
}

fn push<T: ToString>(out: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key, v.to_string()));
    }
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

impl ModelArgs {
    fn overrides(&self, out: &mut Vec<(&'static str, String)>) {
        push(out, "epochs", &self.epochs);
        push(out, "alpha", &self.alpha);
        push(out, "beta", &self.beta);
        push(out, "backbone", &self.backbone);
        push(out, "loss_mode", &self.loss_mode);
    }
}

impl EvalArgs {
    fn overrides(&self, out: &mut Vec<(&'static str, String)>) {
        push(out, "data_dir", &path_str(&self.data));
        push(out, "checkpoint", &path_str(&self.checkpoint));
        push(out, "k", &self.k);
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Prepare(_) => "prepare",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Ood(_) => "ood",
            Command::Synth(_) => "synth",
        }
    }

    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        match self {
            Command::Prepare(a) => {
                push(&mut out, "input", &path_str(&a.input));
                push(&mut out, "format", &a.format);
                push(&mut out, "k_core", &a.k_core);
                push(&mut out, "test_fraction", &a.test_fraction);
            }
            Command::Train(a) => {
                push(&mut out, "data_dir", &path_str(&a.data));
                a.model.overrides(&mut out);
            }
            Command::Eval(a) => a.overrides(&mut out),
            Command::Ood(a) => {
                a.eval.overrides(&mut out);
                push(&mut out, "proportions", &a.proportions);
                push(&mut out, "ood_seeds", &a.ood_seeds);
            }
            Command::Synth(a) => a.model.overrides(&mut out),
        }
        out
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in &cli.sets {
        cfg.apply(kv)?;
    }
    push_global(&mut cfg, cli)?;
    for (k, v) in cli.command.overrides() {
        cfg.set(k, &v)?;
    }
    Ok(cfg)
}

fn push_global(cfg: &mut RunConfig, cli: &Cli) -> Result<(), Error> {
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(out) = &cli.out {
        cfg.set("out", &out.display().to_string())?;
    }
    Ok(())
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "{THREADS_ENV} must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("{THREADS_ENV}: {e}")))
}

fn run(cli: &Cli) -> Result<(), Error> {
    configure_threads()?;
    let cfg = resolve(cli)?;
    let command = cli.command.name();
    let dir = create_run_dir(&cfg, command)?;
    println!("run_dir={}", dir.display());
    match &cli.command {
        Command::Prepare(_) => {
            print!("{}", cmd_prepare(&cfg, &dir)?.to_text());
        }
        Command::Train(_) => {
            let out = cmd_train(&cfg, &dir)?;
            println!("model={}", model_label(&cfg));
            println!("epochs_run={}", out.log.len());
            println!("best_epoch={}", out.best_epoch);
        }
        Command::Eval(_) => {
            print!("{}", cmd_eval(&cfg, &dir)?.to_text());
        }
        Command::Ood(_) => {
            print!("{}", cmd_ood(&cfg, &dir)?.summary());
        }
        Command::Synth(_) => {
            println!("model={}", model_label(&cfg));
            print!("{}", cmd_synth(&cfg, &dir)?.to_text());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::EmptyDataset(_) => 3,
        Error::Io { .. } | Error::Parse { .. } | Error::Checkpoint(_) => 4,
        Error::InfeasibleProportion { .. } => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            if code == 3 {
                eprintln!("warning: {e}");
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(code)
        }
    }
}
