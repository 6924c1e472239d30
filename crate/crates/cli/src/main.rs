//! `herding`: command-line front end for the herding engine.
//!
//! Every subcommand takes an optional flat JSON `--config`; flags override
//! its values. Outputs embed the resolved config. Exit codes: 0 success,
//! 1 invalid configuration or input, 2 runtime failure (e.g. a PCT
//! violation under `--strict-pct`).

mod commands;
mod config;
mod spec;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::*;
use config::EXIT_CONFIG;

#[derive(Parser)]
#[command(name = "herding", version, about = "Deterministic herding dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Herd a fully visible enumerable model.
    Herd(HerdArgs),
    /// Single-neuron herding.
    Neuron(NeuronArgs),
    /// 1-of-D herding of a discrete distribution.
    Multinomial(MultinomialArgs),
    /// Asymptotic period of the temperature map across a temperature grid.
    Bifurcate(BifurcateArgs),
    /// Herding with hidden units imputed per data case.
    Pomrf(PomrfArgs),
    /// Conditional herding classifier.
    Cond(CondArgs),
    /// Ising lattice herding fed by a Swendsen-Wang moment oracle.
    Ising(IsingArgs),
    /// Diagnostics report for a trace file.
    Diagnose(DiagnoseArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Herd(a) => herd(a),
        Command::Neuron(a) => neuron(a),
        Command::Multinomial(a) => multinomial(a),
        Command::Bifurcate(a) => bifurcate(a),
        Command::Pomrf(a) => pomrf(a),
        Command::Cond(a) => cond(a),
        Command::Ising(a) => ising(a),
        Command::Diagnose(a) => diagnose_cmd(a),
    };
    match result {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
