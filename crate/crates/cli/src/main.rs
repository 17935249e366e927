//! `cohten`: synthesize, decompose, certify and localize from the shell.
//!
//! Exit codes: 0 success, 1 I/O, parse or usage error, 2 certificate
//! failure or infeasible caps, 3 numeric domain error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clap::error::ErrorKind;

use commands::Failure;
use manifest::ManifestBuilder;

#[derive(Debug, Parser)]
#[command(name = "cohten", version, about = "Coherence-constrained CP decomposition and multiarray source recovery")]
struct Cli {
    /// Write the run manifest here instead of next to the first output.
    #[arg(long, global = true, value_name = "PATH")]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a measurement tensor from a scenario file.
    Synth(commands::SynthArgs),
    /// Fit a rank-r CP model, optionally under per-mode coherence caps.
    Decompose(commands::DecomposeArgs),
    /// Print the existence and uniqueness checks for a model.
    Certify(commands::CertifyArgs),
    /// Recover source directions and waveforms from a fitted model.
    Localize(commands::LocalizeArgs),
    /// Coherence, spark and Kruskal rank of a column set.
    Spark(commands::SparkArgs),
    /// Tabulate the border-rank sequence and fit its limit.
    DemoDegeneracy(commands::DemoArgs),
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("COHTEN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("COHTEN_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot size thread pool: {e}")))
}

fn run(cli: &Cli, manifest: &mut ManifestBuilder) -> Result<(), Failure> {
    match &cli.command {
        Command::Synth(a) => commands::synth(a, manifest),
        Command::Decompose(a) => commands::decompose(a, manifest),
        Command::Certify(a) => commands::certify(a, manifest),
        Command::Localize(a) => commands::localize(a, manifest),
        Command::Spark(a) => commands::spark(a, manifest),
        Command::DemoDegeneracy(a) => commands::demo(a, manifest),
    }
}

fn json<T: serde::Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or_default()
}

fn builder(cli: &Cli) -> ManifestBuilder {
    let (name, options, seed) = match &cli.command {
        Command::Synth(a) => ("synth", json(a), Some(a.seed)),
        Command::Decompose(a) => ("decompose", json(a), Some(a.seed)),
        Command::Certify(a) => ("certify", json(a), None),
        Command::Localize(a) => ("localize", json(a), None),
        Command::Spark(a) => ("spark", json(a), None),
        Command::DemoDegeneracy(a) => ("demo-degeneracy", json(a), Some(a.seed)),
    };
    ManifestBuilder::new(name, options, seed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code());
    }

    let mut manifest = builder(&cli);
    let code = match run(&cli, &mut manifest) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };

    let path = cli.manifest.clone().or_else(|| manifest.default_path());
    let record = manifest.finish(code.into());
    let text = serde_json::to_string_pretty(&record).expect("manifest serializes");
    match path {
        Some(p) => {
            if let Err(e) = std::fs::write(&p, text + "\n") {
                eprintln!("error: cannot write manifest {}: {e}", p.display());
                return ExitCode::from(if code == 0 { 1 } else { code });
            }
        }
        None => eprintln!("manifest: {}", serde_json::to_string(&record).expect("manifest serializes")),
    }
    ExitCode::from(code)
}
