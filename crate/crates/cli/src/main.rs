//! `rdtlab` command-line runner.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rdtlab::cli_io::{error_line, exit_code, replay, replay_to, run, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "rdtlab", version, about = "Ricci DeTurck flow laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment configuration (`key = value` lines).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for randomized initial data and probe sampling.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Do not print the summary.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the initial data and its provenance record.
    Generate(RunArgs),
    /// Run the flow and write snapshots and the diagnostics series.
    Evolve(RunArgs),
    /// Evolve, then run the trajectory diagnostics (ADM flux, X_T norm, interpolation check).
    Diagnose(RunArgs),
    /// Evolve and fit the sup-norm decay exponent.
    FitDecay(RunArgs),
    /// Evolve and check heat-kernel lower bounds on the pulled-back flow.
    HarnackCheck(RunArgs),
    /// Decode a snapshot; with --out, write it back out unchanged.
    Replay {
        #[arg(value_name = "SNAPSHOT")]
        path: PathBuf,
        /// Destination file for the re-encoded snapshot.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

fn execute(cmd: Command, args: RunArgs) -> rdtlab::Result<()> {
    let mut cfg = ExperimentConfig::from_path(&args.config).map_err(|e| match e {
        rdtlab::Error::Io(io) => rdtlab::Error::Config { key: "--config".into(), reason: io.to_string() },
        other => other,
    })?;
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    let out = args.out.unwrap_or_else(|| cfg.output.dir.clone());
    let summary = run(cmd, &cfg, &out)?;
    if !args.quiet {
        summary.write(std::io::stdout().lock())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Generate(a) => execute(Command::Generate, a),
        Cmd::Evolve(a) => execute(Command::Evolve, a),
        Cmd::Diagnose(a) => execute(Command::Diagnose, a),
        Cmd::FitDecay(a) => execute(Command::FitDecay, a),
        Cmd::HarnackCheck(a) => execute(Command::HarnackCheck, a),
        Cmd::Replay { path, out, quiet } => {
            let state = match &out {
                Some(dst) => replay_to(&path, dst),
                None => replay(&path),
            };
            state.map(|s| {
                if !quiet {
                    let g = s.h.grid();
                    println!("t = {}", s.t);
                    println!("grid.n = {}", g.dim());
                    println!("grid.resolution = {}", g.resolution());
                    println!("grid.box_length = {}", g.box_length());
                    println!("sup_h = {}", s.h.sup_norm());
                }
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
