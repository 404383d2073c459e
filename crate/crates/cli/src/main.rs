//! Command-line front end for the `wellapprox` crate.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod run_config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wellapprox::Error;

use commands::{Ctx, Failure, Outcome};
use run_config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "wellapprox", version, about = "Fourier dimension experiments for well-approximable matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    /// Seed for every stochastic routine; overrides the config's `seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads.
    #[arg(long, global = true, value_name = "N", env = "WELLAPPROX_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Critical exponents, dimension values and the convergence verdict.
    Dims,
    /// Spectrum of one single-scale function `F_M`.
    Spectrum,
    /// Multi-stage measure construction with decay report and census.
    Build,
    /// Slab measure sandwich checks and plane-coefficient oracle.
    VerifyLattice,
    /// Structural bounds of `F_M` at admissible scales.
    VerifyFm,
    /// Plot-ready CSV tables: spectrum and convergence series.
    Export,
}

pub const EXIT_IO: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_UNSUPPORTED: u8 = 3;
pub const EXIT_DEGENERATE: u8 = 4;
pub const EXIT_SEARCH_CAP: u8 = 5;
pub const EXIT_ORACLE: u8 = 6;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) | Error::Domain(_) | Error::InfiniteSet(_) => EXIT_INVALID,
        Error::Unsupported(_) => EXIT_UNSUPPORTED,
        Error::DegenerateScale { .. } => EXIT_DEGENERATE,
        Error::NotFound(_) | Error::Budget(_) => EXIT_SEARCH_CAP,
        Error::OracleMismatch(_) => EXIT_ORACLE,
    }
}

fn run(cli: &Cli) -> Outcome {
    let Some(path) = &cli.config else {
        return Err(Error::Argument("--config PATH is required".into()).into());
    };
    let bytes = std::fs::read(path).map_err(|e| Error::Argument(format!("cannot read {}: {e}", path.display())))?;
    let cfg = RunConfig::parse(&bytes, cli.seed)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Argument("--threads must be positive".into()).into());
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    std::fs::create_dir_all(&cli.out)?;
    let ctx = Ctx { cfg, out: cli.out.clone() };
    match cli.command {
        Command::Dims => commands::dims(&ctx),
        Command::Spectrum => commands::spectrum(&ctx),
        Command::Build => commands::build(&ctx),
        Command::VerifyLattice => commands::verify_lattice(&ctx),
        Command::VerifyFm => commands::verify_fm(&ctx),
        Command::Export => commands::export(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_IO)
        }
    }
}
