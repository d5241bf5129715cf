//! `pdsep`: synthesize mixture datasets, train the parallel separator bank,
//! separate mixtures, evaluate separation quality, and verify gradients.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
//! failure (non-finite loss or failed gradient check).

mod commands;
mod resolve;

use clap::error::ErrorKind;
use clap::Parser;

#[derive(Parser, Debug)]
#[command(
    name = "pdsep",
    about = "Single-channel blind source separation with parallel dual adversarial pairs",
    version
)]
enum Cli {
    /// Synthesize a labeled mixture dataset (PDG1 container).
    Synth(commands::synth::SynthArgs),
    /// Train a separator bank on a dataset.
    Train(commands::train::TrainArgs),
    /// Separate one mixture into its estimated sources.
    Separate(commands::separate::SeparateArgs),
    /// Score a trained model against a labeled dataset.
    Eval(commands::eval::EvalArgs),
    /// Finite-difference verification of every backbone op (64-bit mode).
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) =>
        {
            let _ = e.print();
            std::process::exit(0);
        }
        Err(e) => {
            let _ = e.print();
            std::process::exit(1);
        }
    };
    let outcome = match cli {
        Cli::Synth(args) => commands::synth::run(args),
        Cli::Train(args) => commands::train::run(args),
        Cli::Separate(args) => commands::separate::run(args),
        Cli::Eval(args) => commands::eval::run(args),
        Cli::Gradcheck(args) => commands::gradcheck::run(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
