//! Frontend for the railguard engine: `analyze`, `evaluate`, `simulate`,
//! `report` and `serve`. The binary is a thin wrapper around [`run`].

pub mod analyze;
pub mod args;
pub mod error;
pub mod evaluate;
pub mod overlay;
pub mod report;
pub mod serve;
pub mod session;
pub mod simulate;
pub mod webhook;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult};

/// Runs one command and returns its exit code. Errors are reported on stderr.
pub fn run(cli: Cli) -> u8 {
    let result = match &cli.command {
        Command::Analyze(a) => analyze::run(a).map(|_| ()),
        Command::Evaluate(a) => evaluate::run(a).map(|_| ()),
        Command::Simulate(a) => simulate::run(a),
        Command::Report(a) => report::run(a),
        Command::Serve(a) => serve::run(a),
    };
    match result {
        Ok(()) => error::EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
