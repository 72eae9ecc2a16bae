//! `pulse`: train, detect, evaluate, interpolate, synthesize, report.
//!
//! Exit codes: 0 success, 1 pipeline failure, 2 usage or configuration error.

mod args;
mod commands;
mod failure;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::failure::Failure;

fn configure_jobs(jobs: Option<usize>) -> Result<(), Failure> {
    let Some(n) = jobs else { return Ok(()) };
    if n == 0 {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::pipeline(format!("thread pool: {e}")))?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_jobs(cli.jobs)?;
    match cli.command {
        Command::Train(a) => commands::train::run(a),
        Command::Detect(a) => commands::detect::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Interpolate(a) => commands::interpolate::run(a),
        Command::Synth(a) => commands::synth::run(a),
        Command::Report(a) => commands::report::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet {
        "error"
    } else {
        "warn"
    }))
    .format_timestamp(None)
    .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("pulse: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
