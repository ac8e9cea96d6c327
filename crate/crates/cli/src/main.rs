//! `ctp`: batch CLI for continuous-treatment policy learning.
//!
//! Subcommands: `fit` (selection on a CSV sample), `simulate` (regret
//! experiments on the synthetic catalog), `biasbound` (envelope fit and
//! bound table), `evaluate` (apply a fitted policy file). Exit codes:
//! 0 ok, 2 configuration error, 3 I/O error, 4 numerical failure; all
//! failures print one machine-parseable line on stderr.

mod args;
mod run;

use args::{Cli, Command};
use clap::error::ErrorKind;
use clap::Parser;
use run::{single_line, CliError};
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                // Help/version are successful informational outputs.
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("error: config: {}", single_line(&e.to_string()));
            return ExitCode::from(2);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.render());
            ExitCode::from(err.exit_code())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if cli.threads == 0 {
        return execute(cli);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Config(format!("building a {}-thread pool: {e}", cli.threads)))?;
    pool.install(|| execute(cli))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Fit(a) => run::run_fit(a),
        Command::Simulate(a) => run::run_simulate(a),
        Command::Biasbound(a) => run::run_biasbound(a),
        Command::Evaluate(a) => run::run_evaluate(a),
    }
}
