//! `mtcrbm` command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
//! Errors go to standard error as a single line starting with `E:`.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mtcrbm::ErrorCategory;

#[derive(Debug, Parser)]
#[command(name = "mtcrbm", version, about = "Multi-task conditional RBMs for motion classification and morphing")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multi-task dataset.
    Synth(commands::SynthArgs),
    /// Train a model.
    Train(commands::TrainArgs),
    /// Grid search over hidden width and history order.
    Gridsearch(commands::GridArgs),
    /// Accuracy tables and confusion matrices on a dataset.
    Eval(commands::EvalArgs),
    /// Classify sequences and write JSON-lines posteriors.
    Classify(commands::ClassifyArgs),
    /// Morph one sequence toward target labels.
    Morph(commands::MorphArgs),
    /// Before/after target-style probabilities for morphed sequences.
    MorphEval(commands::MorphEvalArgs),
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub category: ErrorCategory,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            category: ErrorCategory::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            category: ErrorCategory::Data,
            message: message.into(),
        }
    }
}

impl From<mtcrbm::Error> for Failure {
    fn from(e: mtcrbm::Error) -> Self {
        Failure {
            category: e.category(),
            message: e.to_string(),
        }
    }
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Usage => 1,
        ErrorCategory::Data => 2,
        ErrorCategory::Numeric => 3,
    }
}

fn category_name(category: ErrorCategory) -> &'static str {
    match category {
        ErrorCategory::Usage => "usage",
        ErrorCategory::Data => "data",
        ErrorCategory::Numeric => "numeric",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("E: usage: {first}");
            eprint!("{}", e.render());
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();

    let outcome = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Gridsearch(a) => commands::gridsearch(a),
        Command::Eval(a) => commands::eval(a),
        Command::Classify(a) => commands::classify(a),
        Command::Morph(a) => commands::morph(a),
        Command::MorphEval(a) => commands::morph_eval(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("E: {}: {}", category_name(f.category), f.message);
            ExitCode::from(exit_code(f.category))
        }
    }
}
