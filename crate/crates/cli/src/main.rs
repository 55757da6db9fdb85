//! `ggc`: prepare datasets, train and search autoencoder/classifier
//! pipelines, evaluate them and run the desk-scale paradigm comparison.
//!
//! Every command reads a TOML config and writes into `--out`, together with
//! a `manifest.toml` describing the run. On failure a single line
//! `error kind=<kind> message="<text>"` goes to stderr and the exit code is
//! nonzero (2 for configuration problems, 1 otherwise).

mod commands;
mod config;
mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{load, CommandConfig, ConfigErrors, ReproduceConfig};
use crate::manifest::RunManifest;

/// Environment variable that sets the worker count when `--workers` is absent.
const WORKERS_ENV: &str = "GGC_WORKERS";

#[derive(Parser)]
#[command(name = "ggc", version, about = "Guided graph compression for graph classification")]
struct Cli {
    /// Worker threads; falls back to GGC_WORKERS, then to one per core.
    /// Outputs do not depend on this value.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    /// 2k/500/1k synthetic split, 100 epochs.
    Desk,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset or convert jets, then split into train/val/test.
    Prepare(RunArgs),
    /// Train one pipeline and save its per-epoch record and checkpoints.
    Train(RunArgs),
    /// Grid or sequential hyperparameter search.
    Search(RunArgs),
    /// Score a held-out set with a trained run: k-fold AUC and ROC artifacts.
    Evaluate(RunArgs),
    /// Map a dataset to latent graphs with a frozen encoder.
    Compress(RunArgs),
    /// Train and evaluate every (paradigm, autoencoder, classifier) row of the comparison.
    Reproduce {
        #[arg(long, value_enum)]
        scale: Scale,
        /// Optional TOML overriding the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, rec| {
            writeln!(
                buf,
                "ts={:.3} level={} target={} {}",
                manifest::unix_now(),
                rec.level().as_str().to_ascii_lowercase(),
                rec.target(),
                rec.args()
            )
        })
        .init();
}

fn worker_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("{WORKERS_ENV}={v:?} is not a worker count"))?;
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn run_command<C, F>(name: &str, args: &RunArgs, body: F) -> Result<()>
where
    C: CommandConfig,
    F: FnOnce(&C, &Path) -> Result<()>,
{
    let cfg: C = load(&args.config, args.seed)?;
    let m = RunManifest::start(name, Some(&args.config), &cfg, &args.out, cfg.seed())?;
    body(&cfg, &args.out)?;
    m.finish()
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = worker_count(cli.workers)? {
        if n == 0 {
            bail!("worker count must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker pool")?;
    }
    match cli.command {
        Command::Prepare(a) => run_command("prepare", &a, commands::prepare),
        Command::Train(a) => run_command("train", &a, commands::train_cmd),
        Command::Search(a) => run_command("search", &a, commands::search),
        Command::Evaluate(a) => run_command("evaluate", &a, commands::evaluate),
        Command::Compress(a) => run_command("compress", &a, commands::compress),
        Command::Reproduce { scale: Scale::Desk, config, out, seed } => {
            let cfg: ReproduceConfig = match &config {
                Some(p) => load(p, seed)?,
                None => config::parse("", Path::new("."), seed)?,
            };
            let m = RunManifest::start("reproduce", config.as_deref(), &cfg, &out, cfg.seed())?;
            commands::reproduce(&cfg, &out)?;
            m.finish()
        }
    }
}

/// Short category for the error line.
fn error_kind(err: &anyhow::Error) -> &'static str {
    if err.downcast_ref::<ConfigErrors>().is_some() {
        return "config";
    }
    if let Some(e) = err.chain().find_map(|c| c.downcast_ref::<ggc::Error>()) {
        return match e {
            ggc::Error::InvalidConfig(_) | ggc::Error::LambdaOutOfRange(_) => "config",
            ggc::Error::Format(_) | ggc::Error::InsufficientSamples(_) | ggc::Error::InvalidGraph(_) => "data",
            ggc::Error::NonFiniteLoss(_) | ggc::Error::NonFiniteGradient | ggc::Error::TooManyQubits(_) => "training",
            ggc::Error::Io(_) => "io",
            _ => "internal",
        };
    }
    if err.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some()) {
        return "io";
    }
    "internal"
}

fn error_line(err: &anyhow::Error) -> String {
    let text = format!("{err:#}").split_whitespace().collect::<Vec<_>>().join(" ").replace('"', "'");
    format!("error kind={} message=\"{text}\"", error_kind(err))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = error_kind(&e);
            eprintln!("{}", error_line(&e));
            ExitCode::from(if kind == "config" { 2 } else { 1 })
        }
    }
}
