//! `mmpt`: mine matched pairs, train the rule generator, decode and evaluate.
//!
//! Exit codes: 0 ok, 2 I/O, 3 empty result, 4 insufficient data,
//! 5 fragment not found, 6 decode overflow, 64 usage.

mod commands;
mod config;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

pub use commands::*;

/// A failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Failure {
        Failure {
            code,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Failure {
        Failure::new(2, message)
    }

    pub fn empty(message: impl Into<String>) -> Failure {
        Failure::new(3, message)
    }

    pub fn insufficient(message: impl Into<String>) -> Failure {
        Failure::new(4, message)
    }

    pub fn not_found(message: impl Into<String>) -> Failure {
        Failure::new(5, message)
    }

    pub fn overflow(message: impl Into<String>) -> Failure {
        Failure::new(6, message)
    }

    pub fn usage(message: impl Into<String>) -> Failure {
        Failure::new(64, message)
    }
}

#[derive(Debug, Parser)]
#[command(name = "mmpt", about = "Matched molecular pair transformation toolkit", args_override_self = true)]
struct Cli {
    /// Worker threads for mining, decoding and evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fragment a corpus and write capped matched pairs.
    Mine(MineArgs),
    /// Split a pairs file by source molecule into train/valid/test.
    Split(SplitArgs),
    /// Train the rule generator and write a checkpoint.
    Train(TrainArgs),
    /// Decode transformation rules for source molecules.
    Generate(GenerateArgs),
    /// Report %Valid/%Exist by top-k, and optionally coverage by group.
    Eval(EvalArgs),
    /// Count existing and novel products as the search size grows.
    Sweep(SweepArgs),
}

fn version() -> String {
    format!(
        "{} (checkpoint format {})",
        env!("CARGO_PKG_VERSION"),
        mmpt::model::FORMAT_VERSION
    )
}

fn run(args: Vec<OsString>) -> Result<(), Failure> {
    let args = config::expand(args)?;
    let version: &'static str = Box::leak(version().into_boxed_str());
    let command = Cli::command().version(version);
    let matches = match command.try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return if code == 0 { Ok(()) } else { Err(Failure::new(64, String::new())) };
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Failure::usage(e.to_string()))?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot configure threads: {e}")))?;
    }
    match cli.command {
        Command::Mine(a) => cmd_mine(&a),
        Command::Split(a) => cmd_split(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Generate(a) => cmd_generate(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
