use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RAILGUARD_LOG", "warn")).init();
    ExitCode::from(railguard::run(railguard::Cli::parse()))
}
