//! Command-line driver for the fringe-projection phase pipeline: scene
//! synthesis, fringe decoding, unwrapping, reparametrized resampling,
//! benchmarking, and depth export.
//!
//! Exit codes are a stable contract for CI: 0 on success, 1 on runtime or
//! data failures (unreadable inputs, solver breakdown), 2 on usage or
//! config errors (bad flags, malformed manifest, unknown method).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use idphase::diffeo::WarpKind;

use crate::config::RunConfig;

/// A failure, classified by which exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// The invocation or manifest is wrong; nothing ran. Exit code 2.
    Usage(String),
    /// The run started but failed on data or solver grounds. Exit code 1.
    Runtime(String),
}

#[derive(Parser)]
#[command(
    name = "idphase",
    version,
    about = "Fringe-projection phase pipeline: synthesize, decode, unwrap, warp, bench, reconstruct"
)]
struct Cli {
    /// JSON experiment manifest; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed override; funnels into every seeded stage.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker-thread count override.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic scene: ground truth, wrapped phase, fringe triple.
    Synth,
    /// Recover wrapped phase, ambient and contrast from three fringe images.
    Decode {
        fringe0: PathBuf,
        fringe1: PathBuf,
        fringe2: PathBuf,
    },
    /// Unwrap a wrapped-phase image.
    Unwrap {
        /// Wrapped-phase PFM.
        input: PathBuf,
        /// One of: itoh, goldstein, qguide, lsq, graphcut, hier, idhier.
        #[arg(long)]
        method: String,
    },
    /// Resample a field through a reparametrization of its own grid.
    Warp {
        /// Input field PFM.
        input: PathBuf,
        /// Disk-automorphism parameters THETA,RE,IM (conformal map).
        #[arg(long, value_name = "THETA,RE,IM", conflicts_with = "roi")]
        mobius: Option<String>,
        /// Region of interest CX,CY,SIGMA,WEIGHT (transport map); repeatable.
        #[arg(long, value_name = "CX,CY,SIGMA,W")]
        roi: Vec<String>,
        /// Interpolation: raw values, wrap-aware phase, or integer labels.
        #[arg(long, value_enum, default_value_t = KindArg::Linear)]
        kind: KindArg,
        /// Apply the inverse map instead.
        #[arg(long)]
        invert: bool,
    },
    /// Run a benchmark suite (table1 = period timing sweep, table2 = noisy
    /// accuracy trials) and write its report.
    Bench {
        /// table1 or table2
        suite: String,
    },
    /// Convert absolute phase to depth and export an ASCII PLY point set.
    Reconstruct {
        /// Absolute-phase PFM.
        input: PathBuf,
        /// Optional grayscale texture PFM (values in [0, 1]).
        #[arg(long, value_name = "PATH")]
        texture: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Linear,
    Phase,
    Label,
}

impl From<KindArg> for WarpKind {
    fn from(k: KindArg) -> WarpKind {
        match k {
            KindArg::Linear => WarpKind::Linear,
            KindArg::Phase => WarpKind::Phase,
            KindArg::Label => WarpKind::Label,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = base.resolve(cli.seed, cli.out, cli.threads);
    cfg.validate()?;

    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("cannot size the thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| {
        CliError::Runtime(format!(
            "cannot create output directory {}: {e}",
            cfg.out_dir.display()
        ))
    })?;

    match &cli.command {
        Command::Synth => commands::cmd_synth(&cfg),
        Command::Decode {
            fringe0,
            fringe1,
            fringe2,
        } => commands::cmd_decode(&cfg, [fringe0, fringe1, fringe2]),
        Command::Unwrap { input, method } => commands::cmd_unwrap(&cfg, input, method),
        Command::Warp {
            input,
            mobius,
            roi,
            kind,
            invert,
        } => commands::cmd_warp(&cfg, input, mobius.as_deref(), roi, (*kind).into(), *invert),
        Command::Bench { suite } => commands::cmd_bench(&cfg, suite),
        Command::Reconstruct { input, texture } => {
            commands::cmd_reconstruct(&cfg, input, texture.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version print to stdout and succeed; everything
            // else is a usage error.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
