//! `bss`: batch front end for separation, evaluation, mixture simulation
//! and benchmarking.

mod bench;
mod error;
mod evaluate;
mod manifest;
mod model;
mod mix;
mod output;
mod separate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "bss", version, about = "Multichannel blind source separation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Separate a multichannel WAV file into sources.
    Separate(separate::SeparateArgs),
    /// Score separated signals against references and/or learned bases.
    Evaluate(evaluate::EvaluateArgs),
    /// Render a simulated mixture with ground truth.
    Mix(mix::MixArgs),
    /// Run a scenario × method × seed grid.
    Bench(bench::BenchArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Separate(args) => separate::run(args, &argv),
        Command::Evaluate(args) => evaluate::run(args, &argv),
        Command::Mix(args) => mix::run(args, &argv),
        Command::Bench(args) => bench::run(args, &argv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { code, message }) => {
            eprintln!("bss: {message}");
            ExitCode::from(code)
        }
    }
}
