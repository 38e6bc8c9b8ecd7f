//! `feasbound`: trace solvability and voltage-feasibility boundary curves
//! of AC power flow, and check them against a brute-force grid oracle.

mod cli;
mod commands;
mod config;
mod fail;
mod output;
mod svg;

use clap::Parser;

fn main() {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("FEASBOUND_LOG", "warn"),
    )
    .init();

    let parsed = cli::Cli::parse();
    let result = match &parsed.command {
        cli::Command::Point(args) => commands::cmd_point(args),
        cli::Command::Trace(args) => commands::cmd_trace(args),
        cli::Command::Sweep(args) => commands::cmd_sweep(args),
        cli::Command::Scan(args) => commands::cmd_scan(args),
        cli::Command::Compare(args) => commands::cmd_compare(args),
    };
    if let Err(failure) = result {
        std::process::exit(failure.report());
    }
}
