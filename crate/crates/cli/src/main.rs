//! `voxl` — batch driver for coreset compression and lifelong localization
//! experiments. Progress goes to stderr; machine-readable results go to
//! files; every command writes a manifest sufficient to re-run it.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use voxl_core::coreset::CoresetMethod;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

macro_rules! runtime_from {
    ($($ty:ty),+) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Runtime(e.to_string())
            }
        })+
    };
}
runtime_from!(
    voxl_core::volume::VolumeError,
    voxl_core::coreset::CoresetError,
    voxl_core::rlenv::EnvError,
    voxl_core::dqn::DqnError,
    voxl_core::lifelong::LifelongError,
    voxl_core::eval::EvalError
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Average,
    CenterSample,
    MaxEntropy,
}

impl From<MethodArg> for CoresetMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Average => CoresetMethod::Average,
            MethodArg::CenterSample => CoresetMethod::CenterSample,
            MethodArg::MaxEntropy => CoresetMethod::MaxEntropy,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "voxl",
    version,
    about = "Volumetric coreset compression and lifelong DQN landmark localization"
)]
struct Cli {
    /// Worker threads for independent evaluation cases. Training and the
    /// timing benchmark always run single-threaded.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a .vol volume with one of the coreset operators.
    Compress {
        /// Input .vol file.
        #[arg(long, short = 'i')]
        input: PathBuf,
        /// Output .vol file; a JSON sidecar is written next to it.
        #[arg(long, short = 'o')]
        out: PathBuf,
        /// Coreset operator (overrides the config's method).
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Per-axis scaling ratio N (overrides the config's n_ratio).
        #[arg(long, short = 'n')]
        ratio: Option<usize>,
        /// Optional CoresetConfig JSON for the remaining knobs.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Accepted for interface uniformity; compression is deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a synthetic phantom volume.
    Phantom {
        /// PhantomConfig JSON.
        #[arg(long)]
        config: PathBuf,
        /// Output .vol file; a JSON sidecar records the landmark.
        #[arg(long, short = 'o')]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the lifelong curriculum and write checkpoints and reports.
    Train {
        /// RunConfig JSON.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate trained checkpoints on the config's held-out test cases.
    Eval {
        /// RunConfig JSON.
        #[arg(long)]
        config: PathBuf,
        /// Directory holding <task>.voxlnet checkpoints
        /// (default: <out_dir>/checkpoints).
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Output directory (default: the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// A train report.json to compare against with paired t-tests.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Evaluate the ground-truth oracle policy instead of checkpoints
        /// (pipeline self-test).
        #[arg(long)]
        oracle: bool,
    },
    /// Measure per-epoch wall-clock for the compressed and full-resolution
    /// pipelines, with and without ERB replay.
    Bench {
        /// RunConfig JSON (the bench section).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Compress {
            input,
            out,
            method,
            ratio,
            config,
            seed: _,
        } => commands::compress(&input, &out, method, ratio, config.as_deref()),
        Command::Phantom { config, out, seed } => commands::phantom(&config, &out, seed),
        Command::Train { config, out, seed } => {
            commands::train(&config, out.as_deref(), seed)
        }
        Command::Eval {
            config,
            checkpoints,
            out,
            seed,
            baseline,
            oracle,
        } => commands::eval(
            &config,
            checkpoints.as_deref(),
            out.as_deref(),
            seed,
            baseline.as_deref(),
            oracle,
            cli.threads,
        ),
        Command::Bench { config, out, seed } => {
            commands::bench(&config, out.as_deref(), seed, cli.threads)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
