//! `dwa`: train, evaluate and run wavelet super-resolution models.
//!
//! Exit status: 0 on success, 1 for invalid flags or configurations, 2 for
//! runtime failures (I/O, decoding, failed checks, divergence).

mod commands;
mod common;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{ablate, checks, eval, features, sr, train};
use common::Global;
use error::{CliResult, EXIT_VALIDATION};

#[derive(Parser, Debug)]
#[command(
    name = "dwa",
    version,
    about = "Wavelet super-resolution with differential wavelet amplifiers"
)]
struct Cli {
    /// Seed for weight init, patch sampling and check inputs
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for run.json and every output file
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    Train(train::TrainCmd),
    Eval(eval::EvalCmd),
    Sr(sr::SrCmd),
    Gradcheck(checks::GradcheckCmd),
    Selftest(checks::SelftestCmd),
    Ablate(ablate::AblateCmd),
    DumpFeatures(features::DumpFeaturesCmd),
}

fn dispatch(cli: &Cli, g: &Global) -> CliResult<()> {
    match &cli.command {
        Command::Train(c) => train::run(c, g),
        Command::Eval(c) => eval::run(c, g),
        Command::Sr(c) => sr::run(c, g),
        Command::Gradcheck(c) => checks::gradcheck(c, g),
        Command::Selftest(c) => checks::selftest(c, g),
        Command::Ablate(c) => ablate::run(c, g),
        Command::DumpFeatures(c) => features::run(c, g),
    }
}

fn run(argv: Vec<String>) -> u8 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_VALIDATION,
            };
        }
    };
    let g = Global {
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
        argv: argv.into_iter().skip(1).collect(),
    };
    match dispatch(&cli, &g) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args().collect()))
}
