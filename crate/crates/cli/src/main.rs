//! `unprompt <cmd> --config <path> [--seed N] [--out DIR]`
//!
//! Exit codes: 0 ok, 2 config error, 3 missing artifact, 4 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use unprompt_core::config::{ConfigError, ExperimentConfig};
use unprompt_core::harness::{run_command, Command, HarnessError, Workspace};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Pretrain,
    Unlearn,
    Eval,
    AblateTimestep,
    AblateSurgery,
    AblateSurrogate,
    RidgeDemo,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Pretrain => Command::Pretrain,
            Cmd::Unlearn => Command::Unlearn,
            Cmd::Eval => Command::Eval,
            Cmd::AblateTimestep => Command::AblateTimestep,
            Cmd::AblateSurgery => Command::AblateSurgery,
            Cmd::AblateSurrogate => Command::AblateSurrogate,
            Cmd::RidgeDemo => Command::RidgeDemo,
        }
    }
}

/// Prompt-free instance unlearning experiments on desk-scale diffusion models.
#[derive(Debug, Parser)]
#[command(name = "unprompt", version)]
struct Args {
    #[arg(value_enum)]
    cmd: Cmd,
    /// Config file, or a preset name (paper-ddpm-analogue, paper-sd3-analogue).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; defaults to the config's output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_threads() -> Result<(), HarnessError> {
    let Ok(raw) = std::env::var("UNPROMPT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| ConfigError::Invalid(format!("UNPROMPT_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HarnessError::Internal(format!("thread pool: {e}")))
}

fn run(args: Args) -> Result<(), HarnessError> {
    init_threads()?;
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    let ws = Workspace::new(cfg.out_dir.clone());
    let out = run_command(args.cmd.into(), &cfg, &ws)?;
    for line in &out.summary {
        println!("{line}");
    }
    println!("run directory {}", out.run_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
